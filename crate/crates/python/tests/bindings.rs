use pyo3::prelude::*;
use pyo3::types::PyDict;

fn with_module(f: impl FnOnce(Python<'_>, &Bound<'_, PyModule>)) {
    Python::initialize();
    Python::attach(|py| {
        let m = pyo3::wrap_pymodule!(sepsis_drift_py::sepsis_drift_py)(py);
        f(py, m.bind(py).cast::<PyModule>().unwrap());
    });
}

#[test]
fn auc_and_labeler_are_callable() {
    with_module(|_, m| {
        let auc: f64 = m
            .call_method1("auc", (vec![0.1, 0.4, 0.35, 0.8], vec![false, false, true, true]))
            .unwrap()
            .extract()
            .unwrap();
        assert_eq!(auc, 0.75);
        assert!(m.call_method1("auc", (vec![0.1, 0.2], vec![true, true])).is_err());

        let sois = m.call_method1("detect_soi", (vec![10.0], vec![11.5])).unwrap();
        let onset: Option<(f64, f64, i32)> = m
            .call_method1("label_sepsis3", (vec![1u8, 1, 1, 3], sois))
            .unwrap()
            .extract()
            .unwrap();
        assert_eq!(onset, Some((3.0, 10.0, 2)));
    });
}

#[test]
fn stages_run_and_refuse_overwrite() {
    let dir = tempfile::tempdir().unwrap();
    let tables = dir.path().join("tables");
    let cfg = dir.path().join("synth.toml");
    std::fs::write(&cfg, "seed = 2\nn_patients_per_bucket = 20\n").unwrap();
    with_module(|py, m| {
        let kw = PyDict::new(py);
        kw.set_item("config", &cfg).unwrap();
        let rec = m.call_method("synth_gen", (&tables,), Some(&kw)).unwrap();
        assert_eq!(rec.get_item("stage").unwrap().extract::<String>().unwrap(), "synth-gen");
        let err = m.call_method("synth_gen", (&tables,), Some(&kw)).unwrap_err();
        assert!(err.is_instance_of::<pyo3::exceptions::PyValueError>(py));
    });
}

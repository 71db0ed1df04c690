use crate::cohort::WINDOW_HOURS;

/// Forward-fill imputation with missingness flag and hours-since-last channels.
///
/// Output is 24 rows of `[values F | flags F | dt F]`. Pad rows are all zero and
/// never seed the fill. Before the first observation the value is 0 and `dt`
/// counts hours since ICU admission.
pub fn impute_simple(values: &[Option<f64>], n_features: usize, pad_hours: usize) -> Vec<f64> {
    assert_eq!(values.len(), WINDOW_HOURS * n_features);
    let f = n_features;
    let width = 3 * f;
    let mut out = vec![0.0; WINDOW_HOURS * width];
    let mut last: Vec<Option<(f64, usize)>> = vec![None; f];
    for h in pad_hours.min(WINDOW_HOURS)..WINDOW_HOURS {
        let row = &mut out[h * width..(h + 1) * width];
        for j in 0..f {
            let (v, flag, dt) = match values[h * f + j] {
                Some(v) => {
                    last[j] = Some((v, h));
                    (v, 1.0, 0.0)
                }
                None => match last[j] {
                    Some((v, seen)) => (v, 0.0, (h - seen) as f64),
                    None => (0.0, 0.0, (h - pad_hours + 1) as f64),
                },
            };
            row[j] = v;
            row[f + j] = flag;
            row[2 * f + j] = dt;
        }
    }
    out
}

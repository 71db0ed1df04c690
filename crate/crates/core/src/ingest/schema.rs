//! Table schemas and the column-name adapter for real extracts.
//!
//! Every table is read by header name, never by position. Each canonical
//! column may carry aliases so that files exported straight from a
//! MIMIC-IV installation (which use e.g. `race` instead of `ethnicity`, or
//! only `chartdate` for some microbiology rows) resolve onto the same
//! schema the synthetic generator writes.

use std::collections::HashMap;
use std::fmt;

use csv::StringRecord;

use super::IngestError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Table {
    Patients,
    IcuStays,
    Admissions,
    ChartEvents,
    LabEvents,
    Prescriptions,
    MicrobiologyEvents,
    ProcedureEvents,
    DiagnosesIcd,
}

impl Table {
    pub const ALL: [Table; 9] = [
        Table::Patients,
        Table::IcuStays,
        Table::Admissions,
        Table::ChartEvents,
        Table::LabEvents,
        Table::Prescriptions,
        Table::MicrobiologyEvents,
        Table::ProcedureEvents,
        Table::DiagnosesIcd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Table::Patients => "patients",
            Table::IcuStays => "icustays",
            Table::Admissions => "admissions",
            Table::ChartEvents => "chartevents",
            Table::LabEvents => "labevents",
            Table::Prescriptions => "prescriptions",
            Table::MicrobiologyEvents => "microbiologyevents",
            Table::ProcedureEvents => "procedureevents",
            Table::DiagnosesIcd => "diagnoses_icd",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.csv", self.name())
    }

    pub fn schema(self) -> TableSchema {
        use ColumnType::*;
        let c = ColumnSpec::required;
        let o = ColumnSpec::optional;
        let (columns, any_of): (Vec<ColumnSpec>, Vec<Vec<&'static str>>) = match self {
            Table::Patients => (
                vec![
                    c("subject_id", Int, &[]),
                    c("anchor_age", Int, &[]),
                    c("gender", Text, &[]),
                    c("anchor_year_group", Text, &[]),
                ],
                vec![],
            ),
            Table::IcuStays => (
                vec![
                    c("stay_id", Int, &[]),
                    c("subject_id", Int, &[]),
                    c("hadm_id", Int, &[]),
                    c("intime", Timestamp, &[]),
                    c("outtime", Timestamp, &[]),
                ],
                vec![],
            ),
            Table::Admissions => (
                vec![
                    c("hadm_id", Int, &[]),
                    c("subject_id", Int, &[]),
                    c("ethnicity", Text, &["race"]),
                    c("marital_status", Text, &[]),
                    c("deathtime", Timestamp, &[]),
                ],
                vec![],
            ),
            Table::ChartEvents => (
                vec![
                    c("stay_id", Int, &[]),
                    c("itemid", Text, &[]),
                    c("charttime", Timestamp, &[]),
                    c("valuenum", Real, &[]),
                    o("value", Text, &[]),
                ],
                vec![],
            ),
            Table::LabEvents => (
                vec![
                    o("stay_id", Int, &[]),
                    o("hadm_id", Int, &[]),
                    c("itemid", Text, &[]),
                    c("charttime", Timestamp, &[]),
                    c("valuenum", Real, &[]),
                    o("value", Text, &[]),
                ],
                vec![vec!["stay_id", "hadm_id"]],
            ),
            Table::Prescriptions => (
                vec![
                    c("hadm_id", Int, &[]),
                    o("gsn", Text, &[]),
                    o("drug", Text, &[]),
                    c("starttime", Timestamp, &[]),
                    o("stoptime", Timestamp, &[]),
                ],
                vec![vec!["gsn", "drug"]],
            ),
            Table::MicrobiologyEvents => (
                vec![
                    c("hadm_id", Int, &[]),
                    c("charttime", Timestamp, &["chartdate"]),
                    o("chartdate", Timestamp, &[]),
                    c("spec_type_desc", Text, &[]),
                ],
                vec![],
            ),
            Table::ProcedureEvents => (
                vec![
                    c("stay_id", Int, &[]),
                    c("itemid", Text, &[]),
                    c("starttime", Timestamp, &[]),
                ],
                vec![],
            ),
            Table::DiagnosesIcd => (
                vec![
                    c("hadm_id", Int, &[]),
                    c("icd_code", Text, &[]),
                    c("icd_version", Int, &[]),
                ],
                vec![],
            ),
        };
        TableSchema {
            table: self,
            columns,
            any_of,
        }
    }
}

impl fmt::Display for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnType {
    Int,
    Real,
    Text,
    Timestamp,
}

#[derive(Debug, Clone)]
pub struct ColumnSpec {
    pub name: &'static str,
    pub ty: ColumnType,
    pub required: bool,
    pub aliases: &'static [&'static str],
}

impl ColumnSpec {
    fn required(name: &'static str, ty: ColumnType, aliases: &'static [&'static str]) -> Self {
        Self {
            name,
            ty,
            required: true,
            aliases,
        }
    }

    fn optional(name: &'static str, ty: ColumnType, aliases: &'static [&'static str]) -> Self {
        Self {
            name,
            ty,
            required: false,
            aliases,
        }
    }
}

/// Column contract for one table.
#[derive(Debug, Clone)]
pub struct TableSchema {
    pub table: Table,
    pub columns: Vec<ColumnSpec>,
    /// Groups of optional columns of which at least one must be present.
    pub any_of: Vec<Vec<&'static str>>,
}

impl TableSchema {
    /// Map the canonical column names onto header positions.
    pub fn resolve(&self, header: &StringRecord) -> Result<ResolvedColumns, IngestError> {
        let positions: HashMap<&str, usize> = header
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim(), i))
            .collect();
        let mut index = HashMap::new();
        for col in &self.columns {
            let found = std::iter::once(&col.name)
                .chain(col.aliases.iter())
                .find_map(|n| positions.get(n).copied());
            match found {
                Some(i) => {
                    index.insert(col.name, i);
                }
                None if col.required => {
                    return Err(IngestError::MissingColumn {
                        table: self.table,
                        column: col.name.to_string(),
                    })
                }
                None => {}
            }
        }
        for group in &self.any_of {
            if !group.iter().any(|n| index.contains_key(n)) {
                return Err(IngestError::MissingColumn {
                    table: self.table,
                    column: group.join(" or "),
                });
            }
        }
        Ok(ResolvedColumns { index })
    }
}

/// Header positions for the canonical columns present in a file.
#[derive(Debug, Clone)]
pub struct ResolvedColumns {
    index: HashMap<&'static str, usize>,
}

impl ResolvedColumns {
    pub fn has(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    /// Trimmed cell content; `None` when the column is absent or the cell empty.
    pub fn get<'r>(&self, record: &'r StringRecord, name: &str) -> Option<&'r str> {
        let i = *self.index.get(name)?;
        let v = record.get(i)?.trim();
        (!v.is_empty()).then_some(v)
    }
}

//! Wide-format longitudinal trial data with intercurrent events (ICEs).
//!
//! Observation within a subject runs `L0, L1, A1, L2, A2, …, LK, AK, Y`.
//! Once a value is missing every later value is missing as well. ICE
//! indicators are not forced to be monotone: `A_k` may be 0 after an earlier 1.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("row {row}, column '{column}': cannot parse '{value}' as a number")]
    Parse { row: usize, column: String, value: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("subject {subject}: {reason}")]
    Validation { subject: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// One subject's record. `l[k-1]`, `ice[k-1]` hold visit `k = 1..=K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    /// Randomised arm `A0` (true = treated).
    pub a0: bool,
    pub l0: Vec<f64>,
    pub l: Vec<Option<Vec<f64>>>,
    pub ice: Vec<Option<bool>>,
    pub y: Option<f64>,
}

impl Subject {
    pub fn arm(&self) -> usize {
        usize::from(self.a0)
    }

    /// `A_1 = … = A_k = 0`, all observed. `k = 0` is vacuously true.
    pub fn ice_free_through(&self, k: usize) -> bool {
        self.ice[..k].iter().all(|a| *a == Some(false))
    }

    /// Index (1-based) of the first ICE, if any.
    pub fn first_ice(&self) -> Option<usize> {
        self.ice.iter().position(|a| *a == Some(true)).map(|i| i + 1)
    }

    /// `L_k` for `k = 0..=K`.
    pub fn covariates(&self, k: usize) -> Option<&[f64]> {
        if k == 0 {
            Some(&self.l0)
        } else {
            self.l[k - 1].as_deref()
        }
    }
}

/// Column layout of a dataset: number of visits and covariate dimension per visit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    /// `dims[k]` is the dimension of `L_k`, `k = 0..=K`.
    pub dims: Vec<usize>,
}

impl Schema {
    /// Scalar covariates at every visit.
    pub fn scalar(k: usize) -> Self {
        Schema { dims: vec![1; k + 1] }
    }

    pub fn k(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["a0".to_string()];
        for (k, &p) in self.dims.iter().enumerate() {
            h.extend((1..=p).map(|j| format!("l{k}_{j}")));
            if k > 0 {
                h.push(format!("a{k}"));
            }
        }
        h.push("y".to_string());
        h
    }

    /// Infers the layout from a header and checks it is in canonical order.
    pub fn from_header<S: AsRef<str>>(header: &[S]) -> Result<Self, DataError> {
        // `l3` is accepted as shorthand for a scalar `l3_1`.
        let owned: Vec<String> = header
            .iter()
            .map(|s| {
                let s = s.as_ref().trim();
                match s.strip_prefix('l') {
                    Some(k) if !k.is_empty() && k.bytes().all(|b| b.is_ascii_digit()) => format!("{s}_1"),
                    _ => s.to_string(),
                }
            })
            .collect();
        let names: Vec<&str> = owned.iter().map(String::as_str).collect();
        if names.first() != Some(&"a0") {
            return Err(DataError::Schema("first column must be 'a0'".into()));
        }
        if names.last() != Some(&"y") {
            return Err(DataError::Schema("last column must be 'y'".into()));
        }
        let mut dims: Vec<usize> = Vec::new();
        for name in &names[1..names.len() - 1] {
            if let Some(rest) = name.strip_prefix('l') {
                let (k, j) = rest
                    .split_once('_')
                    .and_then(|(k, j)| Some((k.parse::<usize>().ok()?, j.parse::<usize>().ok()?)))
                    .ok_or_else(|| DataError::Schema(format!("unrecognised column '{name}'")))?;
                if k >= dims.len() {
                    dims.resize(k + 1, 0);
                }
                dims[k] = dims[k].max(j);
            } else if !name.starts_with('a') {
                return Err(DataError::Schema(format!("unrecognised column '{name}'")));
            }
        }
        if dims.is_empty() || dims.iter().any(|&d| d == 0) {
            return Err(DataError::Schema("every visit needs at least one covariate column".into()));
        }
        let schema = Schema { dims };
        let expected = schema.header();
        if expected.len() != names.len() || expected.iter().zip(&names).any(|(a, b)| a != b) {
            return Err(DataError::Schema(format!(
                "header does not follow the wide layout; expected: {}",
                expected.join(",")
            )));
        }
        Ok(schema)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialDataset {
    schema: Schema,
    subjects: Vec<Subject>,
}

impl TrialDataset {
    /// Validates every subject against the schema and the monotone
    /// observation rule.
    pub fn new(schema: Schema, subjects: Vec<Subject>) -> Result<Self, DataError> {
        if schema.dims.is_empty() || schema.dims.iter().any(|&d| d == 0) {
            return Err(DataError::Schema("covariate dimensions must be positive".into()));
        }
        for (i, s) in subjects.iter().enumerate() {
            validate_subject(&schema, s).map_err(|reason| DataError::Validation { subject: i, reason })?;
        }
        Ok(TrialDataset { schema, subjects })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    /// Number of post-baseline visits.
    pub fn k(&self) -> usize {
        self.schema.k()
    }

    pub fn n(&self) -> usize {
        self.subjects.len()
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn into_subjects(self) -> Vec<Subject> {
        self.subjects
    }

    pub fn dims(&self) -> &[usize] {
        &self.schema.dims
    }

    /// Entry `i` is true iff subject `i` has `A_1 = … = A_k = 0`, all observed.
    pub fn ice_free_mask(&self, through_k: usize) -> Vec<bool> {
        assert!(through_k <= self.k(), "through_k {through_k} exceeds K = {}", self.k());
        self.subjects.iter().map(|s| s.ice_free_through(through_k)).collect()
    }

    /// Subset (with repetition allowed) in the given order.
    pub fn select(&self, indices: &[usize]) -> TrialDataset {
        TrialDataset {
            schema: self.schema.clone(),
            subjects: indices.iter().map(|&i| self.subjects[i].clone()).collect(),
        }
    }

    pub fn arm_sizes(&self) -> [usize; 2] {
        let treated = self.subjects.iter().filter(|s| s.a0).count();
        [self.n() - treated, treated]
    }
}

fn validate_subject(schema: &Schema, s: &Subject) -> Result<(), String> {
    let k = schema.k();
    if s.l.len() != k || s.ice.len() != k {
        return Err(format!("expected {k} visits, found {} covariate and {} ICE entries", s.l.len(), s.ice.len()));
    }
    if s.l0.len() != schema.dims[0] {
        return Err(format!("L0 has dimension {}, expected {}", s.l0.len(), schema.dims[0]));
    }
    if s.l0.iter().any(|v| !v.is_finite()) {
        return Err("non-finite L0".into());
    }
    // Sequence L1, A1, ..., LK, AK, Y must be observed up to a point and missing after.
    let mut gap: Option<String> = None;
    for j in 0..k {
        match &s.l[j] {
            Some(v) => {
                if let Some(g) = &gap {
                    return Err(format!("L{} observed after {g} is missing", j + 1));
                }
                if v.len() != schema.dims[j + 1] {
                    return Err(format!("L{} has dimension {}, expected {}", j + 1, v.len(), schema.dims[j + 1]));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(format!("non-finite L{}", j + 1));
                }
            }
            None => {
                gap.get_or_insert(format!("L{}", j + 1));
            }
        }
        match s.ice[j] {
            Some(_) => {
                if let Some(g) = &gap {
                    return Err(format!("A{} observed after {g} is missing", j + 1));
                }
            }
            None => {
                gap.get_or_insert(format!("A{}", j + 1));
            }
        }
    }
    if let Some(y) = s.y {
        if let Some(g) = &gap {
            return Err(format!("Y observed after {g} is missing"));
        }
        if !y.is_finite() {
            return Err("non-finite Y".into());
        }
    }
    Ok(())
}

/// Static regime `(a0, a1, …, aK)`; the hypothetical regime has all ICEs at 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Regime {
    pub a0: bool,
    pub ice: Vec<bool>,
}

impl Regime {
    pub fn no_ice(a0: bool, k: usize) -> Self {
        Regime { a0, ice: vec![false; k] }
    }

    pub fn is_hypothetical(&self) -> bool {
        self.ice.iter().all(|a| !a)
    }
}

/// Potential-outcome means per arm under no ICE and their contrast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub mean_treated: f64,
    pub mean_control: f64,
    pub contrast: f64,
    pub se: Option<f64>,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
    /// Subjects contributing, indexed by arm (control, treated).
    pub n_used: [usize; 2],
}

impl EstimateResult {
    pub fn new(mean_treated: f64, mean_control: f64, n_used: [usize; 2]) -> Self {
        EstimateResult {
            mean_treated,
            mean_control,
            contrast: mean_treated - mean_control,
            se: None,
            ci_lower: None,
            ci_upper: None,
            n_used,
        }
    }

    pub fn arm_mean(&self, arm: usize) -> f64 {
        if arm == 1 {
            self.mean_treated
        } else {
            self.mean_control
        }
    }
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<TrialDataset, DataError> {
    let file = std::fs::File::open(path)?;
    read_csv_from(file, None)
}

/// Reads with an explicit schema; the header must match it exactly.
pub fn read_csv_with_schema(path: impl AsRef<Path>, schema: &Schema) -> Result<TrialDataset, DataError> {
    let file = std::fs::File::open(path)?;
    read_csv_from(file, Some(schema))
}

pub fn read_csv_from<R: Read>(reader: R, schema: Option<&Schema>) -> Result<TrialDataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let inferred = Schema::from_header(&header)?;
    if let Some(s) = schema {
        if *s != inferred {
            return Err(DataError::Schema(format!(
                "header does not match the requested schema; expected: {}",
                s.header().join(",")
            )));
        }
    }
    let schema = inferred;
    let k = schema.k();
    let mut subjects = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        if record.len() != header.len() {
            return Err(DataError::Schema(format!("row {row} has {} fields, expected {}", record.len(), header.len())));
        }
        let mut col = 0usize;
        let mut next = || {
            let c = col;
            col += 1;
            (c, record.get(c).unwrap_or(""))
        };
        let number = |c: usize, v: &str| -> Result<Option<f64>, DataError> {
            if v.is_empty() {
                return Ok(None);
            }
            v.parse::<f64>().map(Some).map_err(|_| DataError::Parse {
                row,
                column: header[c].clone(),
                value: v.to_string(),
            })
        };
        let binary = |c: usize, v: &str| -> Result<Option<bool>, DataError> {
            match number(c, v)? {
                None => Ok(None),
                Some(x) if x == 0.0 => Ok(Some(false)),
                Some(x) if x == 1.0 => Ok(Some(true)),
                Some(_) => Err(DataError::Parse {
                    row,
                    column: header[c].clone(),
                    value: v.to_string(),
                }),
            }
        };

        let (c, v) = next();
        let a0 = binary(c, v)?.ok_or_else(|| DataError::Schema(format!("row {row}: randomised arm a0 is missing")))?;
        let mut l0 = Vec::with_capacity(schema.dims[0]);
        for _ in 0..schema.dims[0] {
            let (c, v) = next();
            l0.push(number(c, v)?.ok_or_else(|| DataError::Validation {
                subject: r,
                reason: format!("baseline covariate '{}' is missing", header[c]),
            })?);
        }
        let mut l = Vec::with_capacity(k);
        let mut ice = Vec::with_capacity(k);
        for visit in 1..=k {
            let mut vals = Vec::with_capacity(schema.dims[visit]);
            let mut missing = 0;
            for _ in 0..schema.dims[visit] {
                let (c, v) = next();
                match number(c, v)? {
                    Some(x) => vals.push(x),
                    None => missing += 1,
                }
            }
            if missing > 0 && missing < schema.dims[visit] {
                return Err(DataError::Validation {
                    subject: r,
                    reason: format!("L{visit} is partially observed"),
                });
            }
            l.push(if missing == 0 { Some(vals) } else { None });
            let (c, v) = next();
            ice.push(binary(c, v)?);
        }
        let (c, v) = next();
        let y = number(c, v)?;
        subjects.push(Subject { a0, l0, l, ice, y });
    }
    TrialDataset::new(schema, subjects)
}

pub fn write_csv(data: &TrialDataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let file = std::fs::File::create(path)?;
    write_csv_to(data, std::io::BufWriter::new(file))
}

pub fn write_csv_to<W: Write>(data: &TrialDataset, writer: W) -> Result<(), DataError> {
    let mut w = csv::WriterBuilder::new().from_writer(writer);
    w.write_record(data.schema.header())?;
    let fmt = |v: f64| format!("{v:?}");
    for s in &data.subjects {
        let mut rec: Vec<String> = vec![u8::from(s.a0).to_string()];
        rec.extend(s.l0.iter().map(|&v| fmt(v)));
        for visit in 0..data.k() {
            match &s.l[visit] {
                Some(vals) => rec.extend(vals.iter().map(|&v| fmt(v))),
                None => rec.extend(std::iter::repeat_n(String::new(), data.schema.dims[visit + 1])),
            }
            rec.push(s.ice[visit].map_or(String::new(), |a| u8::from(a).to_string()));
        }
        rec.push(s.y.map_or(String::new(), fmt));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn subject(a0: bool, ice: &[Option<bool>], y: Option<f64>) -> Subject {
        let k = ice.len();
        let l = (0..k)
            .map(|j| if ice[j].is_some() { Some(vec![j as f64]) } else { None })
            .collect();
        Subject {
            a0,
            l0: vec![0.5],
            l,
            ice: ice.to_vec(),
            y,
        }
    }

    #[test]
    fn mask_at_zero_is_all_true() {
        let d = TrialDataset::new(
            Schema::scalar(2),
            vec![subject(true, &[Some(true), Some(true)], Some(1.0)), subject(false, &[Some(false), Some(false)], Some(0.0))],
        )
        .unwrap();
        assert_eq!(d.ice_free_mask(0), vec![true, true]);
        assert_eq!(d.ice_free_mask(2), vec![false, true]);
    }

    #[test]
    fn late_ice_breaks_mask() {
        let d = TrialDataset::new(Schema::scalar(2), vec![subject(true, &[Some(false), Some(true)], Some(1.0))]).unwrap();
        assert_eq!(d.ice_free_mask(1), vec![true]);
        assert_eq!(d.ice_free_mask(2), vec![false]);
    }

    #[test]
    fn outcome_after_missing_ice_rejected() {
        let err = TrialDataset::new(Schema::scalar(1), vec![subject(false, &[None], Some(1.0))]).unwrap_err();
        assert!(matches!(err, DataError::Validation { subject: 0, .. }), "{err}");
    }

    #[test]
    fn csv_missing_a1_with_y_rejected() {
        let text = "a0,l0_1,l1_1,a1,y\n1,0.1,0.2,,3.0\n";
        let err = read_csv_from(text.as_bytes(), None).unwrap_err();
        assert!(matches!(err, DataError::Validation { .. }), "{err}");
    }

    #[test]
    fn csv_two_complete_rows() {
        let text = "a0,l0_1,l1_1,a1,y\n1,0.1,0.2,0,3.0\n0,-1,2,1,4\n";
        let d = read_csv_from(text.as_bytes(), None).unwrap();
        assert_eq!(d.n(), 2);
        assert_eq!(d.k(), 1);
        assert!(d.subjects().iter().all(|s| s.y.is_some() && s.ice[0].is_some()));
    }

    #[test]
    fn csv_parse_error_names_cell() {
        let text = "a0,l0_1,l1_1,a1,y\n1,abc,0.2,0,3.0\n";
        match read_csv_from(text.as_bytes(), None).unwrap_err() {
            DataError::Parse { row, column, .. } => {
                assert_eq!(row, 1);
                assert_eq!(column, "l0_1");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn csv_missing_arm_is_schema_error() {
        let text = "a0,l0_1,l1_1,a1,y\n,0.1,0.2,0,3.0\n";
        assert!(matches!(read_csv_from(text.as_bytes(), None), Err(DataError::Schema(_))));
    }

    #[test]
    fn empty_dataset_writes_header_only() {
        let d = TrialDataset::new(Schema::scalar(2), vec![]).unwrap();
        let mut buf = Vec::new();
        write_csv_to(&d, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "a0,l0_1,l1_1,a1,l2_1,a2,y\n");
    }

    #[test]
    fn multivariate_header_roundtrip() {
        let schema = Schema { dims: vec![2, 1, 3] };
        assert_eq!(Schema::from_header(&schema.header()).unwrap(), schema);
    }

    #[test]
    fn misordered_header_rejected() {
        assert!(Schema::from_header(&["a0", "l0_1", "a1", "l1_1", "y"]).is_err());
    }
}

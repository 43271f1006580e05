//! Long-format person-interval data for a point treatment with a competing
//! event and right censoring, in discrete time.
//!
//! Record `k` of a subject carries the covariates `L_k` measured at the start
//! of interval `k` together with the indicators `C_{k+1}`, `D_{k+1}` and
//! `Y_{k+1}` observed by its end, in that temporal order. An indicator that is
//! not observed because an earlier one in the interval fired is missing.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovariateKind {
    Binary,
    Categorical(u32),
    Continuous,
}

impl CovariateKind {
    pub fn is_discrete(self) -> bool {
        !matches!(self, CovariateKind::Continuous)
    }

    /// Number of levels for a discrete covariate.
    pub fn levels(self) -> Option<u32> {
        match self {
            CovariateKind::Binary => Some(2),
            CovariateKind::Categorical(c) => Some(c),
            CovariateKind::Continuous => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Timing {
    Baseline,
    TimeVarying,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Covariate {
    pub name: String,
    pub kind: CovariateKind,
    pub timing: Timing,
}

impl Covariate {
    pub fn new(name: impl Into<String>, kind: CovariateKind, timing: Timing) -> Self {
        Covariate { name: name.into(), kind, timing }
    }
}

/// Ordered covariate declarations. An empty schema is legal.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CovariateSchema {
    entries: Vec<Covariate>,
}

impl CovariateSchema {
    pub fn new(entries: Vec<Covariate>) -> Result<Self> {
        for (i, c) in entries.iter().enumerate() {
            if c.name.is_empty() || c.name.contains(',') {
                return Err(Error::InvalidSchema(format!("bad covariate name {:?}", c.name)));
            }
            if RESERVED.contains(&c.name.as_str()) {
                return Err(Error::InvalidSchema(format!("{} is a reserved column", c.name)));
            }
            if entries[..i].iter().any(|o| o.name == c.name) {
                return Err(Error::InvalidSchema(format!("duplicate covariate {}", c.name)));
            }
            if let CovariateKind::Categorical(n) = c.kind {
                if n < 2 {
                    return Err(Error::InvalidSchema(format!("{} needs at least 2 levels", c.name)));
                }
            }
        }
        Ok(CovariateSchema { entries })
    }

    pub fn entries(&self) -> &[Covariate] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|c| c.name == name)
    }

    pub fn all_discrete(&self) -> bool {
        self.entries.iter().all(|c| c.kind.is_discrete())
    }
}

const RESERVED: [&str; 7] = ["id", "k", "a", "a_d", "c_next", "d_next", "y_next"];

/// Whether treatment components were assigned jointly (`a_Y = a_D = A`) or
/// separately, as in a hypothetical four-arm trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Design {
    TwoArm,
    FourArm,
}

/// One person-interval. In two-arm data `a_d == a`; in four-arm data `a` is
/// the value of the `A_Y` component and `a_d` that of `A_D`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalRecord {
    pub subject_id: String,
    pub k: usize,
    pub a: u8,
    pub a_d: u8,
    pub l: Vec<f64>,
    pub c_next: Option<bool>,
    pub d_next: Option<bool>,
    pub y_next: Option<bool>,
}

impl IntervalRecord {
    /// True when this record ends follow-up by censoring or by an event.
    pub fn is_terminal(&self) -> bool {
        self.c_next == Some(true) || self.d_next == Some(true) || self.y_next == Some(true)
    }

    pub fn censored(&self) -> bool {
        self.c_next == Some(true)
    }

    /// `D_{k+1} = 1` observed.
    pub fn competing(&self) -> bool {
        self.c_next == Some(false) && self.d_next == Some(true)
    }

    /// `Y_{k+1} = 1` observed.
    pub fn event(&self) -> bool {
        self.c_next == Some(false) && self.d_next == Some(false) && self.y_next == Some(true)
    }

    fn missingness_ok(&self) -> bool {
        match (self.c_next, self.d_next, self.y_next) {
            (Some(true), None, None) => true,
            (Some(false), Some(true), None) => true,
            (Some(false), Some(false), Some(_)) => true,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventHistoryDataset {
    schema: CovariateSchema,
    horizon: usize,
    design: Design,
    records: Vec<IntervalRecord>,
    spans: Vec<Range<usize>>,
    notes: Vec<String>,
}

impl EventHistoryDataset {
    /// Groups records by subject (in order of first appearance) and sorts each
    /// subject's records by interval. No validation is performed.
    pub fn from_records(
        schema: CovariateSchema,
        horizon: usize,
        design: Design,
        records: Vec<IntervalRecord>,
    ) -> Self {
        let mut order: HashMap<String, usize> = HashMap::new();
        let mut groups: Vec<Vec<IntervalRecord>> = Vec::new();
        for r in records {
            let g = *order.entry(r.subject_id.clone()).or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            });
            groups[g].push(r);
        }
        let mut flat = Vec::new();
        let mut spans = Vec::with_capacity(groups.len());
        for mut g in groups {
            g.sort_by_key(|r| r.k);
            let start = flat.len();
            flat.extend(g);
            spans.push(start..flat.len());
        }
        EventHistoryDataset { schema, horizon, design, records: flat, spans, notes: Vec::new() }
    }

    /// Builds a dataset from per-subject record lists that are already sorted.
    pub fn from_subjects(
        schema: CovariateSchema,
        horizon: usize,
        design: Design,
        subjects: Vec<Vec<IntervalRecord>>,
    ) -> Self {
        let total = subjects.iter().map(Vec::len).sum();
        let mut records = Vec::with_capacity(total);
        let mut spans = Vec::with_capacity(subjects.len());
        for s in subjects {
            let start = records.len();
            records.extend(s);
            spans.push(start..records.len());
        }
        EventHistoryDataset { schema, horizon, design, records, spans, notes: Vec::new() }
    }

    pub fn schema(&self) -> &CovariateSchema {
        &self.schema
    }

    /// The last interval index of interest, `K`.
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn design(&self) -> Design {
        self.design
    }

    pub fn records(&self) -> &[IntervalRecord] {
        &self.records
    }

    pub fn n_subjects(&self) -> usize {
        self.spans.len()
    }

    pub fn subject(&self, i: usize) -> &[IntervalRecord] {
        &self.records[self.spans[i].clone()]
    }

    pub fn subjects(&self) -> impl Iterator<Item = &[IntervalRecord]> + '_ {
        self.spans.iter().map(move |s| &self.records[s.clone()])
    }

    /// Subject index and position within the subject for every record.
    pub fn record_positions(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.records.len());
        for (i, s) in self.spans.iter().enumerate() {
            out.extend((0..s.len()).map(|p| (i, p)));
        }
        out
    }

    /// Number of subjects whose first record has `a == arm`.
    pub fn arm_count(&self, arm: u8) -> usize {
        self.subjects().filter(|s| s.first().map(|r| r.a) == Some(arm)).count()
    }

    /// Notes produced at ingestion (e.g. records dropped beyond the horizon).
    pub fn notes(&self) -> &[String] {
        &self.notes
    }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    RecordAfterTerminal,
    GapInFollowUp,
    DuplicateInterval,
    IncompleteFollowUp,
    BeyondHorizon,
    ArmNotConstant,
    BaselineNotConstant,
    Missingness,
    ValueOutOfRange,
}

impl Rule {
    pub fn id(self) -> &'static str {
        match self {
            Rule::RecordAfterTerminal => "RecordAfterTerminal",
            Rule::GapInFollowUp => "GapInFollowUp",
            Rule::DuplicateInterval => "DuplicateInterval",
            Rule::IncompleteFollowUp => "IncompleteFollowUp",
            Rule::BeyondHorizon => "BeyondHorizon",
            Rule::ArmNotConstant => "ArmNotConstant",
            Rule::BaselineNotConstant => "BaselineNotConstant",
            Rule::Missingness => "Missingness",
            Rule::ValueOutOfRange => "ValueOutOfRange",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    pub subject_id: String,
    pub k: usize,
    pub rule: Rule,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
    pub notes: Vec<String>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for n in &self.notes {
            writeln!(f, "note: {n}")?;
        }
        for x in &self.findings {
            writeln!(f, "finding: {} subject={} k={}", x.rule.id(), x.subject_id, x.k)?;
        }
        write!(f, "{} finding(s)", self.findings.len())
    }
}

fn value_ok(kind: CovariateKind, v: f64) -> bool {
    match kind.levels() {
        Some(n) => v.fract() == 0.0 && v >= 0.0 && v < n as f64,
        None => v.is_finite(),
    }
}

/// Checks every structural invariant of the dataset. Findings are data, never
/// errors.
pub fn validate(ds: &EventHistoryDataset) -> ValidationReport {
    let mut report = ValidationReport { findings: Vec::new(), notes: ds.notes.clone() };
    let entries = ds.schema.entries();
    for subj in ds.subjects() {
        let mut push = |k: usize, rule: Rule| {
            report.findings.push(Finding { subject_id: subj[0].subject_id.clone(), k, rule })
        };
        let first = &subj[0];
        let mut ended = false;
        for (pos, r) in subj.iter().enumerate() {
            if pos > 0 && r.k == subj[pos - 1].k {
                push(r.k, Rule::DuplicateInterval);
            } else if r.k != pos {
                push(r.k, Rule::GapInFollowUp);
            }
            if ended {
                push(r.k, Rule::RecordAfterTerminal);
            }
            if r.k > ds.horizon {
                push(r.k, Rule::BeyondHorizon);
            }
            if r.a != first.a || r.a_d != first.a_d || r.a > 1 || r.a_d > 1 {
                push(r.k, Rule::ArmNotConstant);
            }
            if ds.design == Design::TwoArm && r.a != r.a_d {
                push(r.k, Rule::ArmNotConstant);
            }
            if !r.missingness_ok() {
                push(r.k, Rule::Missingness);
            }
            if r.l.len() != entries.len()
                || entries.iter().zip(&r.l).any(|(c, &v)| !value_ok(c.kind, v))
            {
                push(r.k, Rule::ValueOutOfRange);
            } else if entries
                .iter()
                .zip(r.l.iter().zip(&first.l))
                .any(|(c, (v, v0))| c.timing == Timing::Baseline && v != v0)
            {
                push(r.k, Rule::BaselineNotConstant);
            }
            ended |= r.is_terminal();
        }
        let last = subj.last().expect("subjects are non-empty");
        if !last.is_terminal() && last.k < ds.horizon {
            push(last.k, Rule::IncompleteFollowUp);
        }
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RiskSetKind {
    CHazard,
    DHazard,
    YHazard,
}

impl RiskSetKind {
    /// Whether a record at the right interval belongs to this risk set.
    pub fn admits(self, r: &IntervalRecord) -> bool {
        match self {
            RiskSetKind::CHazard => true,
            RiskSetKind::DHazard => r.c_next == Some(false),
            RiskSetKind::YHazard => r.c_next == Some(false) && r.d_next == Some(false),
        }
    }
}

/// Indices (into [`EventHistoryDataset::records`]) of the person-intervals at
/// interval `k` eligible for the given conditional probability.
pub fn risk_set(ds: &EventHistoryDataset, k: usize, kind: RiskSetKind) -> Result<Vec<usize>> {
    if k > ds.horizon {
        return Err(Error::IndexOutOfRange { k, horizon: ds.horizon });
    }
    Ok(ds
        .records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.k == k && kind.admits(r))
        .map(|(i, _)| i)
        .collect())
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReadOptions {
    /// Fill an empty covariate cell with the subject's previous value.
    pub locf: bool,
}

fn parse_indicator(cell: &str, line: usize, col: &str) -> Result<Option<bool>> {
    match cell {
        "" => Ok(None),
        "0" => Ok(Some(false)),
        "1" => Ok(Some(true)),
        other => Err(Error::MalformedRow { line, message: format!("{col}={other:?}") }),
    }
}

fn parse_arm(cell: &str, line: usize, col: &str) -> Result<u8> {
    match cell {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(Error::MalformedRow { line, message: format!("{col}={other:?}") }),
    }
}

/// Parses a long-format CSV. Row-level problems are errors; structural
/// problems are left for [`validate`]. Records beyond `horizon` are dropped
/// with a note.
pub fn read_long_csv_from<R: Read>(
    reader: R,
    schema: &CovariateSchema,
    horizon: usize,
    opts: ReadOptions,
) -> Result<EventHistoryDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::SchemaMismatch(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let design = if header.get(3).map(String::as_str) == Some("a_d") {
        Design::FourArm
    } else {
        Design::TwoArm
    };
    let mut expected: Vec<&str> = vec!["id", "k", "a"];
    if design == Design::FourArm {
        expected.push("a_d");
    }
    expected.extend(["c_next", "d_next", "y_next"]);
    expected.extend(schema.entries().iter().map(|c| c.name.as_str()));
    if header.len() != expected.len() || header.iter().zip(&expected).any(|(h, e)| h != e) {
        return Err(Error::SchemaMismatch(format!(
            "expected header {}, found {}",
            expected.join(","),
            header.join(",")
        )));
    }
    let off = if design == Design::FourArm { 1 } else { 0 };
    let mut rows: Vec<(IntervalRecord, Vec<bool>, usize)> = Vec::new();
    let mut seen: HashMap<(String, usize), ()> = HashMap::new();
    let mut dropped = 0usize;
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::MalformedRow { line, message: e.to_string() })?;
        if rec.len() != expected.len() {
            return Err(Error::MalformedRow { line, message: "wrong number of cells".into() });
        }
        let id = rec[0].to_string();
        if id.is_empty() {
            return Err(Error::MalformedRow { line, message: "empty id".into() });
        }
        let k: usize = rec[1]
            .parse()
            .map_err(|_| Error::MalformedRow { line, message: format!("k={:?}", &rec[1]) })?;
        let a = parse_arm(&rec[2], line, "a")?;
        let a_d = if design == Design::FourArm { parse_arm(&rec[3], line, "a_d")? } else { a };
        let c_next = parse_indicator(&rec[3 + off], line, "c_next")?;
        let d_next = parse_indicator(&rec[4 + off], line, "d_next")?;
        let y_next = parse_indicator(&rec[5 + off], line, "y_next")?;
        let mut l = Vec::with_capacity(schema.len());
        let mut missing = Vec::with_capacity(schema.len());
        for (j, c) in schema.entries().iter().enumerate() {
            let cell = &rec[6 + off + j];
            if cell.is_empty() {
                if !opts.locf {
                    return Err(Error::MalformedRow { line, message: format!("missing {}", c.name) });
                }
                l.push(f64::NAN);
                missing.push(true);
                continue;
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::MalformedRow { line, message: format!("{}={cell:?}", c.name) })?;
            if !value_ok(c.kind, v) {
                return Err(Error::MalformedRow { line, message: format!("{}={cell} out of range", c.name) });
            }
            l.push(v);
            missing.push(false);
        }
        let record = IntervalRecord { subject_id: id.clone(), k, a, a_d, l, c_next, d_next, y_next };
        if !record.missingness_ok() {
            return Err(Error::MalformedRow {
                line,
                message: "indicator missingness violates the within-interval order".into(),
            });
        }
        if seen.insert((id.clone(), k), ()).is_some() {
            return Err(Error::DuplicateInterval { id, k });
        }
        if k > horizon {
            dropped += 1;
            continue;
        }
        rows.push((record, missing, line));
    }
    // Group with line bookkeeping so LOCF can report the offending line.
    let mut order: HashMap<String, usize> = HashMap::new();
    let mut groups: Vec<Vec<(IntervalRecord, Vec<bool>, usize)>> = Vec::new();
    for row in rows {
        let g = *order.entry(row.0.subject_id.clone()).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(row);
    }
    let mut subjects = Vec::with_capacity(groups.len());
    for mut g in groups {
        g.sort_by_key(|(r, _, _)| r.k);
        let mut out: Vec<IntervalRecord> = Vec::with_capacity(g.len());
        for (mut r, missing, line) in g {
            for (j, m) in missing.iter().enumerate() {
                if *m {
                    match out.last() {
                        Some(prev) => r.l[j] = prev.l[j],
                        None => {
                            return Err(Error::MalformedRow {
                                line,
                                message: format!(
                                    "missing {} with nothing to carry forward",
                                    schema.entries()[j].name
                                ),
                            })
                        }
                    }
                }
            }
            out.push(r);
        }
        subjects.push(out);
    }
    let mut ds = EventHistoryDataset::from_subjects(schema.clone(), horizon, design, subjects);
    if dropped > 0 {
        ds.notes.push(format!("dropped {dropped} record(s) with k beyond the horizon {horizon}"));
    }
    Ok(ds)
}

pub fn read_long_csv(
    path: &Path,
    schema: &CovariateSchema,
    horizon: usize,
    opts: ReadOptions,
) -> Result<EventHistoryDataset> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path.display(), e))?;
    read_long_csv_from(std::io::BufReader::new(f), schema, horizon, opts)
}

/// Reads and validates; any finding turns into [`Error::ValidationFailed`].
pub fn load_long_csv(path: &Path, schema: &CovariateSchema, horizon: usize) -> Result<EventHistoryDataset> {
    let ds = read_long_csv(path, schema, horizon, ReadOptions::default())?;
    let report = validate(&ds);
    if !report.is_clean() {
        return Err(Error::ValidationFailed(report.findings.len()));
    }
    Ok(ds)
}

fn indicator(v: Option<bool>) -> &'static str {
    match v {
        None => "",
        Some(false) => "0",
        Some(true) => "1",
    }
}

pub fn write_long_csv_to<W: Write>(ds: &EventHistoryDataset, mut w: W) -> std::io::Result<()> {
    let mut header = String::from("id,k,a");
    if ds.design == Design::FourArm {
        header.push_str(",a_d");
    }
    header.push_str(",c_next,d_next,y_next");
    for c in ds.schema.entries() {
        header.push(',');
        header.push_str(&c.name);
    }
    writeln!(w, "{header}")?;
    for r in &ds.records {
        write!(w, "{},{},{}", r.subject_id, r.k, r.a)?;
        if ds.design == Design::FourArm {
            write!(w, ",{}", r.a_d)?;
        }
        write!(w, ",{},{},{}", indicator(r.c_next), indicator(r.d_next), indicator(r.y_next))?;
        for v in &r.l {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn save_long_csv(ds: &EventHistoryDataset, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path.display(), e))?;
    let mut w = std::io::BufWriter::new(f);
    write_long_csv_to(ds, &mut w).map_err(|e| Error::io(path.display(), e))?;
    w.flush().map_err(|e| Error::io(path.display(), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> CovariateSchema {
        CovariateSchema::new(vec![Covariate::new("L", CovariateKind::Binary, Timing::TimeVarying)]).unwrap()
    }

    fn read(text: &str) -> Result<EventHistoryDataset> {
        read_long_csv_from(text.as_bytes(), &schema(), 1, ReadOptions::default())
    }

    #[test]
    fn two_subjects_all_zero() {
        let ds = read("id,k,a,c_next,d_next,y_next,L\n1,0,1,0,0,0,0\n1,1,1,0,0,0,1\n2,1,0,0,0,0,1\n2,0,0,0,0,0,0\n").unwrap();
        assert_eq!(ds.records().len(), 4);
        assert_eq!(ds.n_subjects(), 2);
        assert_eq!(ds.subject(1)[0].k, 0);
        assert!(validate(&ds).is_clean());
    }

    #[test]
    fn censored_row_with_observed_competing_event_is_malformed() {
        let err = read("id,k,a,c_next,d_next,y_next,L\n1,0,1,1,0,,0\n").unwrap_err();
        assert!(matches!(err, Error::MalformedRow { line: 2, .. }));
    }

    #[test]
    fn header_and_duplicates() {
        assert!(matches!(read("id,k,a,c_next,d_next,y_next\n"), Err(Error::SchemaMismatch(_))));
        assert!(matches!(
            read("id,k,a,c_next,d_next,y_next,L\n1,0,1,0,0,0,0\n1,0,1,0,0,0,0\n"),
            Err(Error::DuplicateInterval { .. })
        ));
    }

    #[test]
    fn structural_findings() {
        let ds = read("id,k,a,c_next,d_next,y_next,L\n1,0,1,0,0,1,0\n1,1,1,0,0,0,0\n2,0,0,0,0,0,0\n3,0,0,0,0,0,0\n3,2,0,0,0,0,0\n").unwrap();
        // subject 3's k=2 record lies beyond the horizon and is dropped
        assert_eq!(ds.notes().len(), 1);
        let rules: Vec<_> = validate(&ds).findings.iter().map(|f| (f.subject_id.clone(), f.rule)).collect();
        assert!(rules.contains(&("1".into(), Rule::RecordAfterTerminal)));
        assert!(rules.contains(&("2".into(), Rule::IncompleteFollowUp)));
    }

    #[test]
    fn gap_is_found() {
        let s = CovariateSchema::default();
        let ds = read_long_csv_from(
            "id,k,a,c_next,d_next,y_next\n1,0,1,0,0,0\n1,2,1,0,0,0\n".as_bytes(),
            &s,
            3,
            ReadOptions::default(),
        )
        .unwrap();
        assert!(validate(&ds).findings.iter().any(|f| f.rule == Rule::GapInFollowUp && f.k == 2));
    }

    #[test]
    fn locf_fills_from_previous_interval() {
        let text = "id,k,a,c_next,d_next,y_next,L\n1,0,1,0,0,0,1\n1,1,1,0,0,0,\n";
        assert!(read(text).is_err());
        let ds = read_long_csv_from(text.as_bytes(), &schema(), 1, ReadOptions { locf: true }).unwrap();
        assert_eq!(ds.records()[1].l, vec![1.0]);
    }

    #[test]
    fn risk_sets_nest() {
        let ds = read("id,k,a,c_next,d_next,y_next,L\n1,0,1,1,,,0\n2,0,0,0,1,,0\n3,0,0,0,0,1,0\n4,0,1,0,0,0,0\n4,1,1,0,0,0,0\n").unwrap();
        let c = risk_set(&ds, 0, RiskSetKind::CHazard).unwrap();
        let d = risk_set(&ds, 0, RiskSetKind::DHazard).unwrap();
        let y = risk_set(&ds, 0, RiskSetKind::YHazard).unwrap();
        assert_eq!((c.len(), d.len(), y.len()), (4, 3, 2));
        assert_eq!(risk_set(&ds, 1, RiskSetKind::CHazard).unwrap().len(), 1);
        assert!(risk_set(&ds, 2, RiskSetKind::CHazard).is_err());
    }

    #[test]
    fn write_then_read_is_identity() {
        let text = "id,k,a,c_next,d_next,y_next,L\n1,0,1,0,0,0,0\n1,1,1,1,,,1\n2,0,0,0,1,,1\n";
        let ds = read(text).unwrap();
        let mut out = Vec::new();
        write_long_csv_to(&ds, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
    }
}

//! Dataset ingestion, run configuration, remote fetch and report emission.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::afe::MaassFormRecord;
use crate::error::{Error, Result};

/// The Maass form table shipped with the crate.
pub fn bundled_fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join("maass_level1.jsonl")
}

/// Two records closer than this in κ are the same form.
pub const DUPLICATE_KAPPA_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub source: String,
    pub form_count: usize,
    pub kappa_max: f64,
    /// Smallest coefficient count over all records.
    pub coeff_depth: usize,
    /// sha256 of the canonical emission.
    pub checksum: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

pub fn load_dataset(path: &Path) -> Result<(Vec<MaassFormRecord>, DatasetManifest)> {
    let text = std::fs::read_to_string(path)?;
    parse_dataset(&text, &path.display().to_string())
}

pub fn parse_dataset(text: &str, source: &str) -> Result<(Vec<MaassFormRecord>, DatasetManifest)> {
    let mut records = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let v: Value = serde_json::from_str(trimmed).map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        records.push(parse_record(&v, line)?);
    }
    records.sort_by(|a, b| a.kappa.total_cmp(&b.kappa));
    let mut warnings = Vec::new();
    let mut kept: Vec<MaassFormRecord> = Vec::with_capacity(records.len());
    for r in records {
        match kept.last_mut() {
            Some(prev) if (r.kappa - prev.kappa).abs() < DUPLICATE_KAPPA_TOL => {
                warnings.push(format!("duplicate kappa {} collapsed", fmt15(r.kappa)));
                // keep the deeper record
                if r.coefficients.len() > prev.coefficients.len() {
                    *prev = r;
                }
            }
            _ => kept.push(r),
        }
    }
    let manifest = DatasetManifest {
        source: source.to_string(),
        form_count: kept.len(),
        kappa_max: kept.last().map_or(0.0, |r| r.kappa),
        coeff_depth: kept.iter().map(|r| r.coefficients.len()).min().unwrap_or(0),
        checksum: checksum(emit_dataset(&kept).as_bytes()),
        warnings,
    };
    Ok((kept, manifest))
}

fn parse_record(v: &Value, line: usize) -> Result<MaassFormRecord> {
    let schema = |msg: String| Error::Schema { line, msg };
    let obj = v.as_object().ok_or_else(|| schema("record is not an object".into()))?;
    let field = |k: &str| obj.get(k).ok_or_else(|| schema(format!("missing field `{k}`")));
    let number = |k: &str, x: &Value| -> Result<f64> {
        match x {
            Value::Number(n) => n.as_f64().ok_or_else(|| schema(format!("`{k}` is not finite"))),
            Value::String(s) => s.trim().parse::<f64>().map_err(|_| schema(format!("`{k}` is not a number"))),
            _ => Err(schema(format!("`{k}` must be a number or decimal string"))),
        }
    };
    let kappa = number("kappa", field("kappa")?)?;
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(schema(format!("kappa must be positive, got {kappa}")));
    }
    let parity = match field("parity")?.as_i64() {
        Some(1) => 1,
        Some(-1) => -1,
        _ => return Err(schema("parity must be +1 or -1".into())),
    };
    let coefficients = field("coefficients")?
        .as_array()
        .ok_or_else(|| schema("`coefficients` must be an array".into()))?
        .iter()
        .map(|c| number("coefficients", c))
        .collect::<Result<Vec<f64>>>()?;
    match coefficients.first() {
        None => return Err(schema("`coefficients` is empty".into())),
        Some(&t1) if (t1 - 1.0).abs() > 1e-12 => {
            return Err(schema(format!("coefficients[0] must be 1 (Hecke normalization), got {t1}")))
        }
        _ => {}
    }
    let alpha = match obj.get("alpha") {
        None | Some(Value::Null) => None,
        Some(a) => {
            let a = number("alpha", a)?;
            if !(a > 0.0) {
                return Err(schema(format!("alpha must be positive, got {a}")));
            }
            Some(a)
        }
    };
    Ok(MaassFormRecord { kappa, parity, coefficients, alpha })
}

#[derive(Serialize)]
struct CanonicalRecord<'a> {
    kappa: String,
    parity: i8,
    coefficients: &'a [f64],
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
}

/// One line per record, shortest round-trip number formatting.
pub fn emit_dataset(records: &[MaassFormRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let c = CanonicalRecord { kappa: format!("{}", r.kappa), parity: r.parity, coefficients: &r.coefficients, alpha: r.alpha };
        out.push_str(&serde_json::to_string(&c).expect("finite record"));
        out.push('\n');
    }
    out
}

pub fn checksum(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            _ => Err(Error::Parse { line: 0, msg: format!("unknown format `{s}`") }),
        }
    }
}

/// Environment variable that overrides `threads` (for CI).
pub const THREADS_ENV: &str = "SPECSUM_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub tail_tol: f64,
    pub threads: usize,
    pub modulus_cap: u64,
    pub delta: f64,
    pub c_smoothing: f64,
    pub format: OutputFormat,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-14,
            rel_tol: 1e-12,
            tail_tol: 1e-10,
            threads: 1,
            modulus_cap: 1 << 16,
            delta: crate::smoothing::DEFAULT_DELTA,
            c_smoothing: crate::smoothing::DEFAULT_C,
            format: OutputFormat::Csv,
            seed: 0,
        }
    }
}

impl RunConfig {
    /// Flat `key = value` text; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: i + 1, msg: format!("expected key=value, got `{line}`") })?;
            cfg.set(k.trim(), v.trim()).map_err(|msg| Error::Parse { line: i + 1, msg })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("bad value `{v}` for `{key}`"))
        }
        match key {
            "abs_tol" => self.abs_tol = num(key, value)?,
            "rel_tol" => self.rel_tol = num(key, value)?,
            "tail_tol" => self.tail_tol = num(key, value)?,
            "threads" | "worker_count" => self.threads = num(key, value)?,
            "modulus_cap" => self.modulus_cap = num::<f64>(key, value)? as u64,
            "delta" => self.delta = num(key, value)?,
            "c_smoothing" | "C" => self.c_smoothing = num(key, value)?,
            "format" | "output_format" => self.format = value.parse().map_err(|e: Error| e.to_string())?,
            "seed" => self.seed = num(key, value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(THREADS_ENV) {
            self.set("threads", &v).map_err(|msg| Error::Parse { line: 0, msg })?;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::OutOfValidatedRange(m.to_string()));
        if self.threads < 1 {
            return bad("threads must be ≥ 1");
        }
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0 && self.tail_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.delta > 0.0 && self.c_smoothing > 0.0) {
            return bad("delta and C must be positive");
        }
        Ok(())
    }

    pub fn quadrature(&self) -> crate::quad::QuadratureConfig {
        crate::quad::QuadratureConfig { abs_tol: self.abs_tol, rel_tol: self.rel_tol, ..Default::default() }
    }

    pub fn trace(&self) -> crate::trace::TraceConfig {
        crate::trace::TraceConfig {
            quad: self.quadrature(),
            tail_tol: self.tail_tol,
            modulus_cap: self.modulus_cap,
            ..Default::default()
        }
    }

    pub fn smoothing(&self, k: f64) -> Result<crate::smoothing::SmoothingParams> {
        crate::smoothing::SmoothingParams::for_scale(k, self.delta, self.c_smoothing)
    }
}

/// Fetches bytes for a URL.
pub trait Transport {
    fn get(&self, url: &str) -> Result<Vec<u8>>;
}

#[cfg(feature = "remote")]
pub struct HttpTransport;

#[cfg(feature = "remote")]
impl Transport for HttpTransport {
    fn get(&self, url: &str) -> Result<Vec<u8>> {
        use std::io::Read;
        let resp = ureq::get(url).call().map_err(|e| Error::Network(e.to_string()))?;
        let mut buf = Vec::new();
        resp.into_reader().read_to_end(&mut buf).map_err(|e| Error::Network(e.to_string()))?;
        Ok(buf)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CatalogEntry {
    pub id: String,
    pub url: String,
    pub sha256: Option<String>,
}

/// Known remote tables. Lines are `id url [sha256]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Catalog(pub Vec<CatalogEntry>);

impl Catalog {
    pub fn parse(text: &str) -> Result<Self> {
        let mut out = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if !(2..=3).contains(&parts.len()) {
                return Err(Error::Parse { line: i + 1, msg: "expected `id url [sha256]`".into() });
            }
            out.push(CatalogEntry {
                id: parts[0].into(),
                url: parts[1].into(),
                sha256: parts.get(2).map(|s| s.to_lowercase()),
            });
        }
        Ok(Self(out))
    }

    pub fn get(&self, id: &str) -> Option<&CatalogEntry> {
        self.0.iter().find(|e| e.id == id)
    }
}

/// Returns the cached copy of `id`, downloading it first if needed.
pub fn fetch_remote(id: &str, cache_dir: &Path, catalog: &Catalog, transport: &dyn Transport) -> Result<PathBuf> {
    let valid_id = !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c));
    if !valid_id || id.starts_with('.') {
        return Err(Error::Network(format!("invalid catalog id `{id}`")));
    }
    let path = cache_dir.join(format!("{id}.jsonl"));
    if path.is_file() {
        return Ok(path);
    }
    let entry = catalog.get(id).ok_or_else(|| Error::Network(format!("not found: `{id}`")))?;
    let bytes = transport.get(&entry.url)?;
    if let Some(expected) = &entry.sha256 {
        let actual = checksum(&bytes);
        if &actual != expected {
            return Err(Error::ChecksumMismatch { expected: expected.clone(), actual });
        }
    }
    std::fs::create_dir_all(cache_dir)?;
    let tmp = cache_dir.join(format!(".{id}.part"));
    std::fs::write(&tmp, &bytes)?;
    std::fs::rename(&tmp, &path)?;
    Ok(path)
}

/// 15 significant digits.
pub fn fmt15(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let e = x.abs().log10().floor() as i32;
    if (-5..15).contains(&e) {
        let decimals = (14 - e).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{x:.14e}")
    }
}

fn round15(x: f64) -> f64 {
    if x.is_finite() {
        format!("{x:.14e}").parse().unwrap_or(x)
    } else {
        x
    }
}

/// Rounds every float in a JSON tree to 15 significant digits.
pub fn round_json(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(num) = n.as_f64().and_then(|x| serde_json::Number::from_f64(round15(x))) {
                *n = num;
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_json),
        Value::Object(o) => o.values_mut().for_each(round_json),
        _ => {}
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub reference: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    pub fn abs(name: impl Into<String>, value: f64, reference: f64, tolerance: f64) -> Self {
        let pass = (value - reference).abs() <= tolerance;
        Self { name: name.into(), value, reference, tolerance, pass }
    }

    pub fn rel(name: impl Into<String>, value: f64, reference: f64, tolerance: f64) -> Self {
        let pass = (value - reference).abs() <= tolerance * reference.abs();
        Self { name: name.into(), value, reference, tolerance, pass }
    }

    /// A check with no reference value, such as `value ≤ bound`.
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, reference: bound, tolerance: 0.0, pass: value <= bound }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub command: String,
    pub checks: Vec<Check>,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub details: Value,
}

impl Report {
    pub fn new(command: impl Into<String>) -> Self {
        Self { command: command.into(), checks: Vec::new(), details: Value::Null }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("name,value,reference,tolerance,pass\n");
        for c in &self.checks {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                csv_field(&c.name),
                fmt15(c.value),
                fmt15(c.reference),
                fmt15(c.tolerance),
                c.pass
            );
        }
        s
    }

    pub fn to_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        round_json(&mut v);
        serde_json::to_string_pretty(&v).expect("report serializes") + "\n"
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Json => self.to_json(),
        }
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

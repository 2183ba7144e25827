//! File formats: run configuration, simulator parameters, market data CSV,
//! simulator CSV, and detection reports.
//!
//! Key-value files are one `key = value` per line with `#` comments. Floats
//! are written with Rust's shortest round-trip formatting, so every number
//! read back is bit-identical to the one written.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime, SecondsFormat, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::arma::{IDENTIFIABILITY_Z, MIN_WINDOW};
use crate::detector::{CriterionConfig, DetectionConfig, DetectionReport, PricePoint};
use crate::error::{Error, Result};
use crate::market::{LambdaVariant, SimulatedMarket, StructuralParams};
use crate::option::{delta as bs_delta, DeltaObservation, DriftMode, OptionKind, OptionSpec};

pub const MARKET_HEADER: [&str; 8] = [
    "timestamp",
    "underlying_price",
    "option_type",
    "strike",
    "expiry",
    "rate",
    "implied_vol",
    "option_delta",
];
const REQUIRED_COLUMNS: usize = 6;

pub const SIMULATION_HEADER: [&str; 5] = ["timestamp_index", "psi", "order_flow", "log_price", "return"];

/// One `key = value` entry with its 1-based line number.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub line: u64,
    pub key: String,
    pub value: String,
}

/// Parse a key-value file. Duplicate keys are rejected.
pub fn parse_key_values(text: &str) -> Result<Vec<Entry>> {
    let mut entries: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i as u64 + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {line}: expected `key = value`, got {content:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(Error::Config(format!("line {line}: empty key or value")));
        }
        if let Some(prev) = entries.iter().find(|e| e.key == key) {
            return Err(Error::Config(format!(
                "line {line}: key {key:?} already set on line {}",
                prev.line
            )));
        }
        entries.push(Entry {
            line,
            key: key.to_string(),
            value: value.to_string(),
        });
    }
    Ok(entries)
}

fn parse_value<T: std::str::FromStr>(e: &Entry) -> Result<T> {
    e.value
        .parse()
        .map_err(|_| Error::Config(format!("line {}: cannot parse {} = {:?}", e.line, e.key, e.value)))
}

fn parse_drift(e: &Entry) -> Result<DriftMode> {
    match e.value.as_str() {
        "per_step" => Ok(DriftMode::PerStep),
        "unit_step" => Ok(DriftMode::UnitStep),
        _ => Err(Error::Config(format!(
            "line {}: drift_mode must be per_step or unit_step, got {:?}",
            e.line, e.value
        ))),
    }
}

fn parse_variant(e: &Entry) -> Result<LambdaVariant> {
    match e.value.as_str() {
        "text" => Ok(LambdaVariant::Text),
        "theorem" => Ok(LambdaVariant::Theorem),
        _ => Err(Error::Config(format!(
            "line {}: lambda_variant must be text or theorem, got {:?}",
            e.line, e.value
        ))),
    }
}

fn parse_kind(e: &Entry) -> Result<OptionKind> {
    e.value
        .parse()
        .map_err(|_| Error::Config(format!("line {}: option_type must be C or P, got {:?}", e.line, e.value)))
}

fn parse_date(e: &Entry) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(&e.value, "%Y-%m-%d")
        .map_err(|_| Error::Config(format!("line {}: {} must be a YYYY-MM-DD date, got {:?}", e.line, e.key, e.value)))
}

fn unknown_key(e: &Entry) -> Error {
    Error::Config(format!("line {}: unknown key {:?}", e.line, e.key))
}

pub fn drift_name(mode: DriftMode) -> &'static str {
    match mode {
        DriftMode::PerStep => "per_step",
        DriftMode::UnitStep => "unit_step",
    }
}

pub fn variant_name(variant: LambdaVariant) -> &'static str {
    match variant {
        LambdaVariant::Text => "text",
        LambdaVariant::Theorem => "theorem",
    }
}

/// Settings of a detection run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub window: usize,
    /// Days per year, 360 or 365.
    pub day_count: u32,
    pub drift_mode: DriftMode,
    pub lambda_variant: LambdaVariant,
    pub gamma_tolerance: f64,
    pub seed: u64,
    pub identifiability_z: f64,
    /// Contract volatility. Defaults to the mean of the file's `implied_vol`.
    pub implied_vol: Option<f64>,
    /// Scale each row by its own `implied_vol` instead of the contract value.
    pub per_row_vol: bool,
    /// Contract selection when the file holds more than one.
    pub option_type: Option<OptionKind>,
    pub strike: Option<f64>,
    pub expiry: Option<NaiveDate>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            window: 100,
            day_count: 360,
            drift_mode: DriftMode::PerStep,
            lambda_variant: LambdaVariant::Theorem,
            gamma_tolerance: 1e-12,
            seed: 0,
            identifiability_z: IDENTIFIABILITY_Z,
            implied_vol: None,
            per_row_vol: false,
            option_type: None,
            strike: None,
            expiry: None,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for e in parse_key_values(text)? {
            match e.key.as_str() {
                "window" => c.window = parse_value(&e)?,
                "day_count" => c.day_count = parse_value(&e)?,
                "drift_mode" => c.drift_mode = parse_drift(&e)?,
                "lambda_variant" => c.lambda_variant = parse_variant(&e)?,
                "gamma_tolerance" => c.gamma_tolerance = parse_value(&e)?,
                "seed" => c.seed = parse_value(&e)?,
                "identifiability_z" => c.identifiability_z = parse_value(&e)?,
                "implied_vol" => c.implied_vol = Some(parse_value(&e)?),
                "per_row_vol" => c.per_row_vol = parse_value(&e)?,
                "option_type" => c.option_type = Some(parse_kind(&e)?),
                "strike" => c.strike = Some(parse_value(&e)?),
                "expiry" => c.expiry = Some(parse_date(&e)?),
                _ => return Err(unknown_key(&e)),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < MIN_WINDOW {
            return Err(Error::Config(format!("window must be at least {MIN_WINDOW}, got {}", self.window)));
        }
        if self.day_count != 360 && self.day_count != 365 {
            return Err(Error::Config(format!("day_count must be 360 or 365, got {}", self.day_count)));
        }
        if !(self.gamma_tolerance > 0.0 && self.gamma_tolerance.is_finite()) {
            return Err(Error::Config(format!("gamma_tolerance must be positive, got {}", self.gamma_tolerance)));
        }
        if !(self.identifiability_z >= 0.0 && self.identifiability_z.is_finite()) {
            return Err(Error::Config(format!(
                "identifiability_z must be non-negative, got {}",
                self.identifiability_z
            )));
        }
        if let Some(v) = self.implied_vol {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("implied_vol must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// The configuration as `key = value` lines, in a form [`RunConfig::parse`] reads back.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "window = {}", self.window);
        let _ = writeln!(out, "day_count = {}", self.day_count);
        let _ = writeln!(out, "drift_mode = {}", drift_name(self.drift_mode));
        let _ = writeln!(out, "lambda_variant = {}", variant_name(self.lambda_variant));
        let _ = writeln!(out, "gamma_tolerance = {:e}", self.gamma_tolerance);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "identifiability_z = {}", self.identifiability_z);
        if let Some(v) = self.implied_vol {
            let _ = writeln!(out, "implied_vol = {v}");
        }
        let _ = writeln!(out, "per_row_vol = {}", self.per_row_vol);
        if let Some(k) = self.option_type {
            let _ = writeln!(out, "option_type = {}", k.code());
        }
        if let Some(k) = self.strike {
            let _ = writeln!(out, "strike = {k}");
        }
        if let Some(d) = self.expiry {
            let _ = writeln!(out, "expiry = {d}");
        }
        out
    }

    pub fn detection_config(&self) -> DetectionConfig {
        DetectionConfig {
            window: self.window,
            drift: self.drift_mode,
            criterion: CriterionConfig {
                gamma_tolerance: self.gamma_tolerance,
                identifiability_z: self.identifiability_z,
            },
        }
    }
}

/// Contract and clock used to turn a simulated path into market data rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketOptions {
    pub option_type: OptionKind,
    pub strike: f64,
    pub expiry: NaiveDate,
    pub rate: f64,
    pub implied_vol: f64,
    pub start: DateTime<Utc>,
    pub interval_seconds: u64,
    pub day_count: u32,
}

/// Contents of a simulator parameter file.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSetup {
    pub params: StructuralParams,
    pub lambda_variant: LambdaVariant,
    pub market: Option<MarketOptions>,
}

pub const DEFAULT_HORIZON: usize = 250;

impl SimulationSetup {
    /// Required keys: `psi_bar rho beta sigma_z sigma_u s0`. Optional:
    /// `horizon lambda lambda_variant` and, for market data output,
    /// `option_type strike expiry rate implied_vol start interval_seconds day_count`.
    pub fn parse(text: &str) -> Result<Self> {
        let entries = parse_key_values(text)?;
        let mut f: BTreeMap<&str, f64> = BTreeMap::new();
        let mut horizon = DEFAULT_HORIZON;
        let mut lambda = None;
        let mut variant = LambdaVariant::Theorem;
        let (mut kind, mut expiry, mut start) = (None, None, None);
        let (mut interval, mut day_count) = (60u64, 360u32);
        for e in &entries {
            match e.key.as_str() {
                "psi_bar" | "rho" | "beta" | "sigma_z" | "sigma_u" | "s0" | "strike" | "rate" | "implied_vol" => {
                    f.insert(e.key.as_str(), parse_value(e)?);
                }
                "horizon" => horizon = parse_value(e)?,
                "lambda" => lambda = Some(parse_value(e)?),
                "lambda_variant" => variant = parse_variant(e)?,
                "option_type" => kind = Some(parse_kind(e)?),
                "expiry" => expiry = Some(parse_date(e)?),
                "start" => {
                    start = Some(
                        parse_timestamp(&e.value)
                            .ok_or_else(|| Error::Config(format!("line {}: cannot parse start {:?}", e.line, e.value)))?,
                    )
                }
                "interval_seconds" => interval = parse_value(e)?,
                "day_count" => day_count = parse_value(e)?,
                _ => return Err(unknown_key(e)),
            }
        }
        let req = |k: &str| f.get(k).copied().ok_or_else(|| Error::Config(format!("missing required key {k:?}")));
        let params = StructuralParams {
            psi_bar: req("psi_bar")?,
            rho: req("rho")?,
            beta: req("beta")?,
            sigma_z: req("sigma_z")?,
            sigma_u: req("sigma_u")?,
            s0: req("s0")?,
            horizon,
            lambda,
        };
        params.validate().map_err(|e| Error::Config(e.to_string()))?;

        let market_keys = ["strike", "rate", "implied_vol"];
        let any_market = kind.is_some() || expiry.is_some() || market_keys.iter().any(|k| f.contains_key(k));
        let market = if any_market {
            let o = MarketOptions {
                option_type: kind.ok_or_else(|| Error::Config("missing required key \"option_type\"".into()))?,
                strike: req("strike")?,
                expiry: expiry.ok_or_else(|| Error::Config("missing required key \"expiry\"".into()))?,
                rate: f.get("rate").copied().unwrap_or(0.0),
                implied_vol: req("implied_vol")?,
                start: start.unwrap_or_else(|| Utc.with_ymd_and_hms(2024, 1, 2, 0, 0, 0).unwrap()),
                interval_seconds: interval,
                day_count,
            };
            if o.interval_seconds == 0 {
                return Err(Error::Config("interval_seconds must be positive".into()));
            }
            if day_count != 360 && day_count != 365 {
                return Err(Error::Config(format!("day_count must be 360 or 365, got {day_count}")));
            }
            Some(o)
        } else {
            None
        };
        Ok(Self {
            params,
            lambda_variant: variant,
            market,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// Accepts RFC 3339, `YYYY-MM-DDTHH:MM:SS[.f]` or `YYYY-MM-DD HH:MM:SS[.f]`
/// (read as UTC), or a bare date at midnight UTC.
pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t.and_utc());
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .map(|d| d.and_hms_opt(0, 0, 0).expect("midnight").and_utc())
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

/// Years from `from` to `to` on a `day_count`-day year.
pub fn year_fraction(from: &DateTime<Utc>, to: &DateTime<Utc>, day_count: u32) -> f64 {
    let d = *to - *from;
    let secs = d.num_seconds() as f64 + f64::from(d.subsec_nanos()) * 1e-9;
    secs / (86_400.0 * f64::from(day_count))
}

pub fn expiry_instant(expiry: NaiveDate) -> DateTime<Utc> {
    expiry.and_hms_opt(0, 0, 0).expect("midnight").and_utc()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketDataRow {
    /// 1-based line in the source file (the header is line 1).
    pub line: u64,
    pub timestamp: DateTime<Utc>,
    pub underlying_price: f64,
    pub option_type: OptionKind,
    pub strike: f64,
    pub expiry: NaiveDate,
    pub rate: f64,
    pub implied_vol: Option<f64>,
    pub option_delta: f64,
    /// The delta was computed from `implied_vol` rather than read.
    pub delta_computed: bool,
}

impl MarketDataRow {
    fn contract(&self) -> (OptionKind, u64, NaiveDate) {
        (self.option_type, self.strike.to_bits(), self.expiry)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedRow {
    pub line: u64,
    pub reason: String,
    /// Present when only the delta is unusable; the price still joins.
    pub row: Option<MarketDataRow>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MarketData {
    pub rows: Vec<MarketDataRow>,
    pub rejected: Vec<RejectedRow>,
}

pub fn load_csv(path: impl AsRef<Path>, day_count: u32) -> Result<MarketData> {
    let file = std::fs::File::open(path)?;
    read_market_csv(file, day_count)
}

fn parse_field<T: std::str::FromStr>(field: &str, name: &str, line: u64) -> Result<T> {
    field.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("cannot parse {name} from {field:?}"),
    })
}

fn optional_f64(field: Option<&str>, name: &str, line: u64) -> Result<Option<f64>> {
    match field.map(str::trim) {
        None | Some("") => Ok(None),
        Some(v) => parse_field::<f64>(v, name, line).map(Some),
    }
}

/// Strict reader for the market data schema.
///
/// The header must be the first six columns of [`MARKET_HEADER`], optionally
/// followed by `implied_vol` and `option_delta`. Rows whose delta sits at or
/// outside its bound are returned in `rejected` with the reason.
pub fn read_market_csv<R: Read>(reader: R, day_count: u32) -> Result<MarketData> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(h) => h?,
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "missing header".into(),
            })
        }
    };
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let width = names.len();
    if !(REQUIRED_COLUMNS..=MARKET_HEADER.len()).contains(&width) || names[..] != MARKET_HEADER[..width] {
        return Err(Error::Parse {
            line: 1,
            message: format!("header must be {}, got {}", MARKET_HEADER.join(","), names.join(",")),
        });
    }

    let mut data = MarketData::default();
    let mut last: Option<DateTime<Utc>> = None;
    for record in records {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        if record.len() < REQUIRED_COLUMNS || record.len() > width {
            return Err(Error::Parse {
                line,
                message: format!("expected {REQUIRED_COLUMNS} to {width} fields, got {}", record.len()),
            });
        }
        let timestamp = parse_timestamp(&record[0]).ok_or_else(|| Error::Parse {
            line,
            message: format!("cannot parse timestamp from {:?}", &record[0]),
        })?;
        if last.is_some_and(|prev| timestamp < prev) {
            return Err(Error::Parse {
                line,
                message: "timestamps must be nondecreasing".into(),
            });
        }
        last = Some(timestamp);
        let underlying_price: f64 = parse_field(&record[1], "underlying_price", line)?;
        if !(underlying_price > 0.0 && underlying_price.is_finite()) {
            return Err(Error::Parse {
                line,
                message: format!("underlying_price must be positive, got {underlying_price}"),
            });
        }
        let option_type: OptionKind = record[2].parse().map_err(|_| Error::Parse {
            line,
            message: format!("option_type must be C or P, got {:?}", &record[2]),
        })?;
        let strike: f64 = parse_field(&record[3], "strike", line)?;
        let expiry = NaiveDate::parse_from_str(record[4].trim(), "%Y-%m-%d").map_err(|_| Error::Parse {
            line,
            message: format!("cannot parse expiry date from {:?}", &record[4]),
        })?;
        let rate: f64 = parse_field(&record[5], "rate", line)?;
        let implied_vol = optional_f64(record.get(6), "implied_vol", line)?;
        let quoted = optional_f64(record.get(7), "option_delta", line)?;

        let mut row = MarketDataRow {
            line,
            timestamp,
            underlying_price,
            option_type,
            strike,
            expiry,
            rate,
            implied_vol,
            option_delta: f64::NAN,
            delta_computed: false,
        };
        match (quoted, implied_vol) {
            (Some(d), _) => row.option_delta = d,
            (None, Some(vol)) => {
                let tau = year_fraction(&timestamp, &expiry_instant(expiry), day_count);
                let computed = OptionSpec::new(option_type, strike, tau, rate, vol)
                    .and_then(|spec| bs_delta(underlying_price, &spec, 0.0));
                match computed {
                    Ok(d) => {
                        row.option_delta = d;
                        row.delta_computed = true;
                    }
                    Err(e) => {
                        data.rejected.push(RejectedRow {
                            line,
                            reason: format!("cannot compute delta: {e}"),
                            row: None,
                        });
                        continue;
                    }
                }
            }
            (None, None) => return Err(Error::UnusableRow { line }),
        }
        match delta_bound_violation(row.option_delta, option_type) {
            None => data.rows.push(row),
            Some(reason) => {
                let at_bound = reason == "delta at bound";
                data.rejected.push(RejectedRow {
                    line,
                    reason: reason.to_string(),
                    row: at_bound.then_some(row),
                });
            }
        }
    }
    Ok(data)
}

fn delta_bound_violation(d: f64, kind: OptionKind) -> Option<&'static str> {
    let (lo, hi) = match kind {
        OptionKind::Call => (0.0, 1.0),
        OptionKind::Put => (-1.0, 0.0),
    };
    if d == lo || d == hi {
        Some("delta at bound")
    } else if !(d > lo && d < hi) {
        Some(match kind {
            OptionKind::Call => "call delta outside (0, 1)",
            OptionKind::Put => "put delta outside (-1, 0)",
        })
    } else {
        None
    }
}

pub fn write_market_csv<W: Write>(rows: &[MarketDataRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MARKET_HEADER)?;
    for r in rows {
        w.write_record([
            format_timestamp(&r.timestamp),
            r.underlying_price.to_string(),
            r.option_type.code().to_string(),
            r.strike.to_string(),
            r.expiry.to_string(),
            r.rate.to_string(),
            r.implied_vol.map_or(String::new(), |v| v.to_string()),
            r.option_delta.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Market data rows for a log price path: one row per price, spaced
/// `interval_seconds` apart from `start`, carrying the exact Black–Scholes
/// delta at the contract volatility.
pub fn synthesize_market_rows(log_prices: &[f64], opts: &MarketOptions) -> Result<Vec<MarketDataRow>> {
    let expiry = expiry_instant(opts.expiry);
    log_prices
        .iter()
        .enumerate()
        .map(|(k, &lp)| {
            let timestamp = opts.start + chrono::Duration::seconds((k as u64 * opts.interval_seconds) as i64);
            let tau = year_fraction(&timestamp, &expiry, opts.day_count);
            let spec = OptionSpec::new(opts.option_type, opts.strike, tau, opts.rate, opts.implied_vol)
                .map_err(|_| Error::Config(format!("row {k} at {} is at or after expiry", format_timestamp(&timestamp))))?;
            let price = lp.exp();
            Ok(MarketDataRow {
                line: k as u64 + 2,
                timestamp,
                underlying_price: price,
                option_type: opts.option_type,
                strike: opts.strike,
                expiry: opts.expiry,
                rate: opts.rate,
                implied_vol: Some(opts.implied_vol),
                option_delta: bs_delta(price, &spec, 0.0)?,
                delta_computed: true,
            })
        })
        .collect()
}

/// Detector inputs for one contract, on a clock in years from the first row.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionInputs {
    pub spec: OptionSpec,
    pub origin: DateTime<Utc>,
    pub prices: Vec<PricePoint>,
    pub deltas: Vec<DeltaObservation>,
    pub vols: Option<Vec<f64>>,
    /// Source line of each delta observation.
    pub lines: Vec<u64>,
}

/// Select one contract and convert its rows for [`crate::detector::run_detection_with_vols`].
///
/// Rows rejected only for a delta at its bound keep their price; their delta
/// is passed through so the detector skips the affected windows.
pub fn detection_inputs(data: &MarketData, config: &RunConfig) -> Result<DetectionInputs> {
    let mut all: Vec<&MarketDataRow> = data
        .rows
        .iter()
        .chain(data.rejected.iter().filter_map(|r| r.row.as_ref()))
        .filter(|r| config.option_type.is_none_or(|k| r.option_type == k))
        .filter(|r| config.strike.is_none_or(|k| r.strike == k))
        .filter(|r| config.expiry.is_none_or(|d| r.expiry == d))
        .collect();
    all.sort_by_key(|r| r.line);
    let mut contracts: Vec<(OptionKind, u64, NaiveDate)> = all.iter().map(|r| r.contract()).collect();
    contracts.sort_by_key(|c| (c.0.code(), c.1, c.2));
    contracts.dedup();
    match contracts.len() {
        0 => return Err(Error::Input("no usable rows for the selected contract".into())),
        1 => {}
        n => {
            let list: Vec<String> = contracts
                .iter()
                .map(|(k, s, e)| format!("{} {} {}", k.code(), f64::from_bits(*s), e))
                .collect();
            return Err(Error::Config(format!(
                "{n} contracts in file ({}); select one with option_type, strike and expiry",
                list.join("; ")
            )));
        }
    }
    let first = all[0];
    let origin = all.iter().map(|r| r.timestamp).min().expect("non-empty");
    let dc = config.day_count;
    let vols_present: Vec<f64> = all.iter().filter_map(|r| r.implied_vol).collect();
    let sigma = match config.implied_vol {
        Some(v) => v,
        None if !vols_present.is_empty() => vols_present.iter().sum::<f64>() / vols_present.len() as f64,
        None => {
            return Err(Error::Config(
                "no implied_vol column values; set implied_vol in the configuration".into(),
            ))
        }
    };
    let rate = all.iter().map(|r| r.rate).sum::<f64>() / all.len() as f64;
    let expiry = year_fraction(&origin, &expiry_instant(first.expiry), dc);
    let spec = OptionSpec::new(first.option_type, first.strike, expiry, rate, sigma)?;

    let mut prices = Vec::with_capacity(all.len());
    let mut deltas = Vec::with_capacity(all.len());
    let mut lines = Vec::with_capacity(all.len());
    for r in &all {
        let t = year_fraction(&origin, &r.timestamp, dc);
        prices.push(PricePoint { t, price: r.underlying_price });
        deltas.push(DeltaObservation {
            t,
            delta: r.option_delta,
            underlying: Some(r.underlying_price),
        });
        lines.push(r.line);
    }
    let vols = config
        .per_row_vol
        .then(|| all.iter().map(|r| r.implied_vol.unwrap_or(sigma)).collect());
    Ok(DetectionInputs {
        spec,
        origin,
        prices,
        deltas,
        vols,
        lines,
    })
}

pub fn write_simulation_csv<W: Write>(market: &SimulatedMarket, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SIMULATION_HEADER)?;
    for k in 0..market.len() {
        w.write_record([
            k.to_string(),
            market.psi[k].to_string(),
            market.order_flow[k].to_string(),
            market.log_prices[k].to_string(),
            market.returns[k].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Read one numeric column of a headed CSV file by name.
pub fn read_column(path: impl AsRef<Path>, name: &str) -> Result<Vec<f64>> {
    read_column_from(std::fs::File::open(path)?, name)
}

pub fn read_column_from<R: Read>(reader: R, name: &str) -> Result<Vec<f64>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let idx = headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Input(format!("unknown column {name:?}; available: {}", headers.iter().collect::<Vec<_>>().join(","))))?;
    let mut values = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let field = record.get(idx).ok_or_else(|| Error::Parse {
            line,
            message: format!("missing column {name:?}"),
        })?;
        values.push(parse_field(field, name, line)?);
    }
    Ok(values)
}

/// Everything a report records besides the detection result itself.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportContext<'a> {
    pub config: &'a RunConfig,
    pub spec: Option<&'a OptionSpec>,
    pub rows_read: usize,
    pub rejected: &'a [RejectedRow],
}

#[derive(Serialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Record<'a> {
    Config {
        config: &'a RunConfig,
        contract: Option<&'a OptionSpec>,
        rows_read: usize,
    },
    RejectedRow {
        line: u64,
        reason: &'a str,
    },
    Window(&'a crate::detector::WindowReport),
    SkippedWindow(&'a crate::detector::SkippedWindow),
    Summary {
        sum_rho: f64,
        sum_delta: f64,
        branch: crate::detector::Branch,
        verdict: crate::detector::Verdict,
        windows_total: usize,
        windows_admitted: usize,
        windows_counted: usize,
        gamma_gate_failures: usize,
        stationarity_failures: usize,
        identifiability_warnings: usize,
        nonconverged: usize,
        skipped_windows: usize,
        skipped_timestamps: &'a [usize],
        messages: &'a [String],
    },
}

/// Line-delimited JSON: a config record, one record per rejected row,
/// window and skipped window, then a summary.
pub fn render_jsonl(ctx: &ReportContext<'_>, report: &DetectionReport) -> Result<String> {
    let mut records = vec![Record::Config {
        config: ctx.config,
        contract: ctx.spec,
        rows_read: ctx.rows_read,
    }];
    records.extend(ctx.rejected.iter().map(|r| Record::RejectedRow {
        line: r.line,
        reason: &r.reason,
    }));
    records.extend(report.per_window.iter().map(Record::Window));
    records.extend(report.diagnostics.skipped.iter().map(Record::SkippedWindow));
    let d = &report.diagnostics;
    records.push(Record::Summary {
        sum_rho: report.sum_rho,
        sum_delta: report.sum_delta,
        branch: report.branch,
        verdict: report.verdict,
        windows_total: d.windows_total,
        windows_admitted: d.windows_admitted,
        windows_counted: d.windows_counted,
        gamma_gate_failures: d.gamma_gate_failures,
        stationarity_failures: d.stationarity_failures,
        identifiability_warnings: d.identifiability_warnings,
        nonconverged: d.nonconverged,
        skipped_windows: d.skipped.len(),
        skipped_timestamps: &d.skipped_timestamps,
        messages: &d.messages,
    });
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(&r).map_err(|e| Error::Input(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

fn flag(b: bool) -> &'static str {
    if b {
        "pass"
    } else {
        "fail"
    }
}

pub fn render_text(ctx: &ReportContext<'_>, report: &DetectionReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "informed trading detection report");
    let _ = writeln!(out);
    let _ = writeln!(out, "[config]");
    out.push_str(&ctx.config.to_key_values());
    let _ = writeln!(out);
    if let Some(s) = ctx.spec {
        let _ = writeln!(out, "[contract]");
        let _ = writeln!(out, "option_type = {}", s.kind.code());
        let _ = writeln!(out, "strike = {}", s.strike);
        let _ = writeln!(out, "expiry_years = {:.6}", s.expiry);
        let _ = writeln!(out, "rate = {:.6}", s.rate);
        let _ = writeln!(out, "implied_vol = {:.6}", s.implied_vol);
        let _ = writeln!(out);
    }
    let _ = writeln!(out, "[input]");
    let _ = writeln!(out, "rows_read = {}", ctx.rows_read);
    let _ = writeln!(out, "rows_rejected = {}", ctx.rejected.len());
    for r in ctx.rejected {
        let _ = writeln!(out, "  line {}: {}", r.line, r.reason);
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "[windows]");
    let _ = writeln!(
        out,
        "{:>8} {:>13} {:>9} {:>9} {:>9} {:>9} {:>6} {:>6} {:>6} {:>13}",
        "start", "gamma", "rho", "delta", "rho_q", "delta_q", "gamma", "stat", "ident", "pointwise"
    );
    for w in &report.per_window {
        let _ = writeln!(
            out,
            "{:>8} {:>13.5e} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>6} {:>6} {:>6} {:>13}",
            w.window_start,
            w.gamma,
            w.rho,
            w.delta,
            w.criterion_rho,
            w.criterion_delta,
            flag(w.gamma_gate),
            flag(w.stationary),
            flag(w.identified),
            w.pointwise.to_string()
        );
    }
    for s in &report.diagnostics.skipped {
        let _ = writeln!(out, "{:>8} skipped: {}", s.window_start, s.reason);
    }
    let d = &report.diagnostics;
    let _ = writeln!(out);
    let _ = writeln!(out, "[summary]");
    let _ = writeln!(out, "windows_total = {}", d.windows_total);
    let _ = writeln!(out, "windows_admitted = {}", d.windows_admitted);
    let _ = writeln!(out, "windows_counted = {}", d.windows_counted);
    let _ = writeln!(out, "gamma_gate_failures = {}", d.gamma_gate_failures);
    let _ = writeln!(out, "stationarity_failures = {}", d.stationarity_failures);
    let _ = writeln!(out, "identifiability_warnings = {}", d.identifiability_warnings);
    let _ = writeln!(out, "nonconverged = {}", d.nonconverged);
    let _ = writeln!(out, "skipped_windows = {}", d.skipped.len());
    let _ = writeln!(out, "sum_rho = {:.6}", report.sum_rho);
    let _ = writeln!(out, "sum_delta = {:.6}", report.sum_delta);
    let _ = writeln!(out, "branch = {}", report.branch);
    let _ = writeln!(out, "verdict = {}", report.verdict);
    for m in &d.messages {
        let _ = writeln!(out, "note: {m}");
    }
    out
}

/// Write the text report to `path` and the records to `path` + `.jsonl`.
pub fn write_report(path: impl AsRef<Path>, ctx: &ReportContext<'_>, report: &DetectionReport) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, render_text(ctx, report))?;
    std::fs::write(jsonl_path(path), render_jsonl(ctx, report)?)?;
    Ok(())
}

pub fn jsonl_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".jsonl");
    s.into()
}

//! AEMP v1.2 telematics ingestion: parse fleet XML snapshots, difference
//! cumulative fuel into fixed consumption buckets, and fit the per-bucket
//! compound-Poisson model.

use crate::stochproc::{fit_compound_poisson_mle, CompoundPoissonFit, MleError};
use chrono::{DateTime, NaiveDateTime, Utc};
use quick_xml::events::Event;
use quick_xml::Reader;
use std::fmt::Write as _;
use std::ops::Range;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error("XML parse error at byte {position}: {message}")]
    Xml { position: u64, message: String },
    #[error("unsupported fuel units `{0}`; only liters are accepted")]
    FuelUnits(String),
    #[error("bad timestamp `{0}`")]
    Timestamp(String),
    #[error("cumulative fuel for {id} decreases from {prev} to {next} at {when}")]
    DecreasingFuel { id: String, prev: f64, next: f64, when: DateTime<Utc> },
    #[error("bucketing needs at least two fuel readings, got {0}")]
    TooFewReadings(usize),
    #[error("only {0} active buckets selected; at least 30 required")]
    InsufficientData(usize),
    #[error(transparent)]
    Mle(#[from] MleError),
}

/// One equipment reading assembled from a fleet feed. `fuel_consumed` is the
/// lifetime cumulative figure; readings without a fuel element keep `None`
/// and are flagged to the caller by that absence.
#[derive(Debug, Clone, PartialEq)]
pub struct EquipmentSnapshot {
    pub make: String,
    pub model: String,
    pub equipment_id: String,
    pub timestamp: DateTime<Utc>,
    pub latitude: Option<f64>,
    pub longitude: Option<f64>,
    /// Cumulative operating hours.
    pub operating_hours: Option<f64>,
    /// Cumulative liters.
    pub fuel_consumed: Option<f64>,
    /// Odometer kilometers.
    pub odometer_km: Option<f64>,
}

fn parse_timestamp(raw: &str) -> Result<DateTime<Utc>, TelemetryError> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Ok(dt.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Ok(DateTime::from_naive_utc_and_offset(naive, Utc));
        }
    }
    Err(TelemetryError::Timestamp(raw.to_string()))
}

/// ISO-8601 duration restricted to days/hours/minutes/seconds, in hours.
fn parse_iso_duration_hours(raw: &str) -> Option<f64> {
    let rest = raw.strip_prefix('P')?;
    let (date_part, time_part) = match rest.split_once('T') {
        Some((d, t)) => (d, t),
        None => (rest, ""),
    };
    let mut hours = 0.0;
    let mut num = String::new();
    for ch in date_part.chars() {
        if ch.is_ascii_digit() || ch == '.' {
            num.push(ch);
        } else {
            let v: f64 = num.parse().ok()?;
            num.clear();
            match ch {
                'D' => hours += v * 24.0,
                'W' => hours += v * 24.0 * 7.0,
                'Y' | 'M' => return None, // calendar-dependent, not expected in feeds
                _ => return None,
            }
        }
    }
    for ch in time_part.chars() {
        if ch.is_ascii_digit() || ch == '.' {
            num.push(ch);
        } else {
            let v: f64 = num.parse().ok()?;
            num.clear();
            match ch {
                'H' => hours += v,
                'M' => hours += v / 60.0,
                'S' => hours += v / 3600.0,
                _ => return None,
            }
        }
    }
    Some(hours)
}

/// Parses an AEMP v1.2 fleet document into one snapshot per Equipment
/// element. Unknown elements are skipped; a missing FuelUsed block leaves
/// `fuel_consumed` empty; FuelUnits other than liters are an error.
pub fn parse_aemp_fleet(xml: &str) -> Result<Vec<EquipmentSnapshot>, TelemetryError> {
    let mut reader = Reader::from_str(xml);
    reader.config_mut().trim_text(true);
    let xml_err = |reader: &Reader<&[u8]>, e: quick_xml::Error| TelemetryError::Xml {
        position: reader.buffer_position(),
        message: e.to_string(),
    };

    let mut out = Vec::new();
    let mut fleet_time: Option<DateTime<Utc>> = None;
    let mut path: Vec<String> = Vec::new();
    let mut current: Option<EquipmentSnapshot> = None;
    let mut fuel_units_ok = true;
    let mut odo_units_km = true;
    let mut pending_units: Option<String> = None;
    let mut element_time: Option<DateTime<Utc>>;
    let mut best_time: Option<DateTime<Utc>> = None;

    loop {
        match reader.read_event() {
            Err(e) => return Err(xml_err(&reader, e)),
            Ok(Event::Eof) => break,
            Ok(Event::Start(e)) => {
                let name = String::from_utf8_lossy(e.name().as_ref()).to_string();
                if name == "Fleet" {
                    for attr in e.attributes().flatten() {
                        if attr.key.as_ref() == b"snapshotTime" {
                            let raw = String::from_utf8_lossy(&attr.value).to_string();
                            fleet_time = Some(parse_timestamp(&raw)?);
                        }
                    }
                }
                if name == "Equipment" {
                    current = Some(EquipmentSnapshot {
                        make: String::new(),
                        model: String::new(),
                        equipment_id: String::new(),
                        timestamp: fleet_time.unwrap_or(DateTime::<Utc>::UNIX_EPOCH),
                        latitude: None,
                        longitude: None,
                        operating_hours: None,
                        fuel_consumed: None,
                        odometer_km: None,
                    });
                    fuel_units_ok = true;
                    odo_units_km = true;
                    best_time = None;
                }
                if matches!(name.as_str(), "FuelUsed" | "Location" | "CumulativeOperatingHours" | "Distance")
                {
                    let mut stamp = None;
                    for attr in e.attributes().flatten() {
                        if attr.key.as_ref() == b"datetime" {
                            let raw = String::from_utf8_lossy(&attr.value).to_string();
                            stamp = Some(parse_timestamp(&raw)?);
                        }
                    }
                    element_time = stamp;
                    // prefer the fuel element's stamp, else any element stamp
                    if name == "FuelUsed" {
                        best_time = element_time.or(best_time);
                    } else if best_time.is_none() {
                        best_time = element_time;
                    }
                }
                path.push(name);
            }
            Ok(Event::End(_)) => {
                let name = path.pop().unwrap_or_default();
                if name == "Equipment" {
                    if let Some(mut snap) = current.take() {
                        if let Some(t) = best_time {
                            snap.timestamp = t;
                        }
                        if !fuel_units_ok {
                            return Err(TelemetryError::FuelUnits(
                                pending_units.take().unwrap_or_default(),
                            ));
                        }
                        out.push(snap);
                    }
                }
            }
            Ok(Event::Text(t)) => {
                let Some(snap) = current.as_mut() else { continue };
                let text = t.unescape().map_err(|e| xml_err(&reader, e))?.to_string();
                let leaf = path.last().map(String::as_str).unwrap_or("");
                match leaf {
                    "Make" => snap.make = text,
                    "Model" => snap.model = text,
                    "EquipmentID" => snap.equipment_id = text,
                    "Latitude" => snap.latitude = text.parse().ok(),
                    "Longitude" => snap.longitude = text.parse().ok(),
                    "Hour" => snap.operating_hours = parse_iso_duration_hours(&text),
                    "FuelUnits" => {
                        if !text.eq_ignore_ascii_case("liter") && !text.eq_ignore_ascii_case("litre")
                        {
                            fuel_units_ok = false;
                            pending_units = Some(text);
                        }
                    }
                    "FuelConsumed" => snap.fuel_consumed = text.parse().ok(),
                    "OdometerUnits" => odo_units_km = text.eq_ignore_ascii_case("kilometer"),
                    "Odometer" => {
                        if odo_units_km {
                            snap.odometer_km = text.parse().ok();
                        }
                    }
                    _ => {}
                }
            }
            Ok(_) => {}
        }
    }
    Ok(out)
}

/// Serializes snapshots back into an AEMP v1.2 fleet document covering the
/// fields the parser owns; `parse -> write -> parse` is idempotent.
pub fn write_aemp_fleet(snapshots: &[EquipmentSnapshot]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="utf-8"?>"#);
    let _ = writeln!(s, r#"<Fleet version="0" xmlns="http://schemas.aemp.org/fleet">"#);
    for snap in snapshots {
        let stamp = snap.timestamp.format("%Y-%m-%dT%H:%M:%S%.3f");
        let _ = writeln!(s, "<Equipment>");
        let _ = writeln!(s, "<EquipmentHeader>");
        let _ = writeln!(s, "<Make>{}</Make>", snap.make);
        let _ = writeln!(s, "<Model>{}</Model>", snap.model);
        let _ = writeln!(s, "<EquipmentID>{}</EquipmentID>", snap.equipment_id);
        let _ = writeln!(s, "</EquipmentHeader>");
        if let (Some(lat), Some(lon)) = (snap.latitude, snap.longitude) {
            let _ = writeln!(s, r#"<Location datetime="{stamp}">"#);
            let _ = writeln!(s, "<Latitude>{lat}</Latitude>");
            let _ = writeln!(s, "<Longitude>{lon}</Longitude>");
            let _ = writeln!(s, "</Location>");
        }
        if let Some(h) = snap.operating_hours {
            let _ = writeln!(s, r#"<CumulativeOperatingHours datetime="{stamp}">"#);
            let _ = writeln!(s, "<Hour>PT{h}H</Hour>");
            let _ = writeln!(s, "</CumulativeOperatingHours>");
        }
        if let Some(fuel) = snap.fuel_consumed {
            let _ = writeln!(s, r#"<FuelUsed datetime="{stamp}">"#);
            let _ = writeln!(s, "<FuelUnits>liter</FuelUnits>");
            let _ = writeln!(s, "<FuelConsumed>{fuel}</FuelConsumed>");
            let _ = writeln!(s, "</FuelUsed>");
        }
        if let Some(km) = snap.odometer_km {
            let _ = writeln!(s, r#"<Distance datetime="{stamp}">"#);
            let _ = writeln!(s, "<OdometerUnits>kilometer</OdometerUnits>");
            let _ = writeln!(s, "<Odometer>{km}</Odometer>");
            let _ = writeln!(s, "</Distance>");
        }
        let _ = writeln!(s, "</Equipment>");
    }
    let _ = writeln!(s, "</Fleet>");
    s
}

/// De-duplicates by `(equipment id, timestamp)` and sorts chronologically.
pub fn dedup_snapshots(mut snapshots: Vec<EquipmentSnapshot>) -> Vec<EquipmentSnapshot> {
    snapshots.sort_by(|a, b| {
        (a.equipment_id.as_str(), a.timestamp).cmp(&(b.equipment_id.as_str(), b.timestamp))
    });
    snapshots.dedup_by(|a, b| a.equipment_id == b.equipment_id && a.timestamp == b.timestamp);
    snapshots
}

/// Consumption per fixed time bucket for one asset.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketSeries {
    pub start: DateTime<Utc>,
    pub bucket_minutes: u32,
    /// Rounded liters per bucket; `None` marks a bucket without full
    /// coverage (never imputed as zero).
    pub values: Vec<Option<i64>>,
}

impl BucketSeries {
    /// Tab-separated dump: bucket index, start offset in minutes, liters.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("bucket\toffset_min\tliters\n");
        for (i, v) in self.values.iter().enumerate() {
            let cell = v.map(|x| x.to_string()).unwrap_or_else(|| "missing".into());
            let _ = writeln!(s, "{}\t{}\t{}", i, i as u32 * self.bucket_minutes, cell);
        }
        s
    }
}

/// Differences one asset's cumulative fuel readings into consumption per
/// bucket, linearly interpolating at bucket boundaries. The grid starts at
/// the first reading; a trailing partial bucket is marked missing.
pub fn bucket_consumption(
    snapshots: &[EquipmentSnapshot],
    bucket_minutes: u32,
) -> Result<BucketSeries, TelemetryError> {
    let readings: Vec<(&EquipmentSnapshot, f64)> = snapshots
        .iter()
        .filter_map(|s| s.fuel_consumed.map(|f| (s, f)))
        .collect();
    if readings.len() < 2 {
        return Err(TelemetryError::TooFewReadings(readings.len()));
    }
    for pair in readings.windows(2) {
        let (a, fa) = pair[0];
        let (b, fb) = pair[1];
        if fb < fa {
            return Err(TelemetryError::DecreasingFuel {
                id: a.equipment_id.clone(),
                prev: fa,
                next: fb,
                when: b.timestamp,
            });
        }
    }

    let start = readings[0].0.timestamp;
    let end = readings.last().unwrap().0.timestamp;
    let bucket_secs = bucket_minutes as i64 * 60;
    let span = (end - start).num_seconds();
    let full = (span / bucket_secs) as usize;
    let fuel_at = |t: DateTime<Utc>| -> f64 {
        // piecewise-linear interpolation on the cumulative curve
        let mut prev = readings[0];
        for &(s, f) in &readings {
            if s.timestamp >= t {
                let (ps, pf) = prev;
                let dt = (s.timestamp - ps.timestamp).num_seconds();
                if dt == 0 {
                    return f;
                }
                let w = (t - ps.timestamp).num_seconds() as f64 / dt as f64;
                return pf + w * (f - pf);
            }
            prev = (s, f);
        }
        readings.last().unwrap().1
    };
    let mut values = Vec::with_capacity(full + 1);
    for k in 0..full {
        let a = start + chrono::Duration::seconds(k as i64 * bucket_secs);
        let b = start + chrono::Duration::seconds((k + 1) as i64 * bucket_secs);
        values.push(Some((fuel_at(b) - fuel_at(a)).round() as i64));
    }
    if span % bucket_secs != 0 {
        values.push(None); // trailing partial bucket has no full coverage
    }
    Ok(BucketSeries { start, bucket_minutes, values })
}

/// Result of fitting one asset's activity-window consumption.
#[derive(Debug, Clone)]
pub struct AssetFitReport {
    pub fit: CompoundPoissonFit,
    pub buckets_used: usize,
    pub windows: Vec<Range<usize>>,
}

/// Fits the compound-Poisson consumption model over caller-supplied activity
/// windows (bucket index ranges); missing buckets are excluded, never zero.
pub fn fit_asset_distribution(
    series: &BucketSeries,
    windows: &[Range<usize>],
) -> Result<AssetFitReport, TelemetryError> {
    let mut samples: Vec<u64> = Vec::new();
    for w in windows {
        for i in w.clone() {
            if let Some(Some(v)) = series.values.get(i) {
                samples.push((*v).max(0) as u64);
            }
        }
    }
    if samples.len() < 30 {
        return Err(TelemetryError::InsufficientData(samples.len()));
    }
    let fit = fit_compound_poisson_mle(&samples)?;
    Ok(AssetFitReport { fit, buckets_used: samples.len(), windows: windows.to_vec() })
}

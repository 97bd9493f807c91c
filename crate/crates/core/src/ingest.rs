//! Loading and validation of the three input tables and region geometries.
//!
//! Hazard rows that fail validation are rejected individually and recorded in a
//! [`ValidationReport`]; only schema-level problems abort a load. Population and
//! socioeconomic panels are strict: any invalid row is a fatal data error.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::ops::RangeInclusive;
use std::path::Path;

use chrono::NaiveDate;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{PrimeError, Result};

/// Fixed-width region identifier (FIPS-style county code).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RegionCode(String);

impl RegionCode {
    pub fn new(code: impl Into<String>) -> Self {
        RegionCode(code.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for RegionCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for RegionCode {
    fn from(s: &str) -> Self {
        RegionCode(s.to_string())
    }
}

/// Socioeconomic indicators loaded by default, in canonical column order.
pub const DEFAULT_INDICATORS: [&str; 21] = [
    "pct_under_5",
    "pct_over_65",
    "avg_household_size",
    "rural_farm_population",
    "pct_female_workforce",
    "pct_single_households",
    "pct_no_high_school",
    "median_rent",
    "median_household_income",
    "pct_below_poverty",
    "pct_employed",
    "owner_occupied_units",
    "pct_renter_occupied",
    "pct_mobile_homes",
    "housing_density",
    "households_with_vehicle",
    "households_no_fuel",
    "households_no_plumbing",
    "same_house_1yr",
    "hospitals",
    "emergency_personnel",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardEvent {
    pub region_code: RegionCode,
    pub hazard_type: String,
    pub year: i32,
    pub damage_per_capita: f64,
    pub duration_days: f64,
    pub date: Option<NaiveDate>,
}

/// Column-name mapping for hazard files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HazardSchema {
    pub region_code: String,
    pub hazard_type: String,
    pub year: String,
    pub damage_per_capita: String,
    pub duration_days: String,
    pub date: String,
}

impl Default for HazardSchema {
    fn default() -> Self {
        HazardSchema {
            region_code: "UniqueCode".into(),
            hazard_type: "Disaster".into(),
            year: "Year".into(),
            damage_per_capita: "DamageRIM".into(),
            duration_days: "Duration (days)".into(),
            date: "Date".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct HazardLoadOptions {
    pub schema: HazardSchema,
    pub region_pattern: Regex,
    /// Inclusive study bounds; rows outside are rejected.
    pub year_bounds: Option<(i32, i32)>,
}

impl Default for HazardLoadOptions {
    fn default() -> Self {
        HazardLoadOptions {
            schema: HazardSchema::default(),
            region_pattern: default_region_pattern(),
            year_bounds: None,
        }
    }
}

pub fn default_region_pattern() -> Regex {
    Regex::new(r"^\d{5}$").expect("static pattern")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    /// 1-based data row number (header excluded).
    pub row: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub rows_in: usize,
    pub rejections: Vec<Rejection>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HazardLoad {
    pub events: Vec<HazardEvent>,
    pub report: ValidationReport,
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| PrimeError::io(path, e))
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader)
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h == name)
}

fn required_column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    column_index(headers, name).ok_or_else(|| PrimeError::MissingColumn {
        column: name.to_string(),
    })
}

/// First header among `aliases` (case-insensitive) present in the table.
fn aliased_column(headers: &csv::StringRecord, aliases: &[&str]) -> Result<usize> {
    headers
        .iter()
        .position(|h| aliases.iter().any(|a| a.eq_ignore_ascii_case(h)))
        .ok_or_else(|| PrimeError::MissingColumn {
            column: aliases[0].to_string(),
        })
}

pub fn load_hazard_events(path: impl AsRef<Path>, opts: &HazardLoadOptions) -> Result<HazardLoad> {
    read_hazard_events(open(path.as_ref())?, opts)
}

pub fn read_hazard_events<R: Read>(reader: R, opts: &HazardLoadOptions) -> Result<HazardLoad> {
    let mut rdr = csv_reader(reader);
    let headers = rdr.headers()?.clone();
    let s = &opts.schema;
    let region_idx = required_column(&headers, &s.region_code)?;
    let type_idx = required_column(&headers, &s.hazard_type)?;
    let year_idx = required_column(&headers, &s.year)?;
    let damage_idx = required_column(&headers, &s.damage_per_capita)?;
    let duration_idx = required_column(&headers, &s.duration_days)?;
    let date_idx = column_index(&headers, &s.date);

    let mut load = HazardLoad::default();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        load.report.rows_in += 1;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                load.report.rejections.push(Rejection {
                    row,
                    reason: format!("malformed record: {e}"),
                });
                continue;
            }
        };
        match parse_hazard_row(&record, opts, [region_idx, type_idx, year_idx, damage_idx, duration_idx], date_idx) {
            Ok(event) => load.events.push(event),
            Err(reason) => load.report.rejections.push(Rejection { row, reason }),
        }
    }
    Ok(load)
}

fn parse_hazard_row(
    record: &csv::StringRecord,
    opts: &HazardLoadOptions,
    [region_idx, type_idx, year_idx, damage_idx, duration_idx]: [usize; 5],
    date_idx: Option<usize>,
) -> std::result::Result<HazardEvent, String> {
    let s = &opts.schema;
    let field = |idx: usize, name: &str| {
        record
            .get(idx)
            .filter(|v| !v.is_empty())
            .ok_or_else(|| format!("missing {name}"))
    };
    let region = field(region_idx, &s.region_code)?;
    if !opts.region_pattern.is_match(region) {
        return Err(format!("invalid region code `{region}`"));
    }
    let hazard_type = field(type_idx, &s.hazard_type)?;
    let year: i32 = field(year_idx, &s.year)?
        .parse()
        .map_err(|_| format!("unparseable {}", s.year))?;
    let damage: f64 = field(damage_idx, &s.damage_per_capita)?
        .parse()
        .map_err(|_| format!("unparseable {}", s.damage_per_capita))?;
    let duration: f64 = field(duration_idx, &s.duration_days)?
        .parse()
        .map_err(|_| format!("unparseable {}", s.duration_days))?;
    if !damage.is_finite() || damage < 0.0 {
        return Err("negative damage".into());
    }
    if !duration.is_finite() {
        return Err(format!("unparseable {}", s.duration_days));
    }
    if duration <= 0.0 {
        return Err("nonpositive duration".into());
    }
    if let Some((lo, hi)) = opts.year_bounds {
        if year < lo || year > hi {
            return Err(format!("year {year} outside study bounds {lo}-{hi}"));
        }
    }
    let date = match date_idx.and_then(|i| record.get(i)).filter(|v| !v.is_empty()) {
        Some(raw) => Some(
            NaiveDate::parse_from_str(raw, "%Y-%m-%d").map_err(|_| format!("unparseable {}", s.date))?,
        ),
        None => None,
    };
    Ok(HazardEvent {
        region_code: RegionCode::new(region),
        hazard_type: hazard_type.to_string(),
        year,
        damage_per_capita: damage,
        duration_days: duration,
        date,
    })
}

/// Writes events in the documented hazard format (with a trailing `Date` column).
pub fn write_hazard_events<W: Write>(writer: W, events: &[HazardEvent], schema: &HazardSchema) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        &schema.region_code,
        &schema.hazard_type,
        &schema.year,
        &schema.damage_per_capita,
        &schema.duration_days,
        &schema.date,
    ])?;
    for e in events {
        wtr.write_record([
            e.region_code.as_str().to_string(),
            e.hazard_type.clone(),
            e.year.to_string(),
            e.damage_per_capita.to_string(),
            e.duration_days.to_string(),
            e.date.map(|d| d.format("%Y-%m-%d").to_string()).unwrap_or_default(),
        ])?;
    }
    wtr.flush().map_err(|e| PrimeError::io("<writer>", e))?;
    Ok(())
}

/// Population counts keyed by region and year.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopulationPanel {
    entries: BTreeMap<(RegionCode, i32), u64>,
}

impl PopulationPanel {
    pub fn insert(&mut self, region: RegionCode, year: i32, population: u64) -> Result<()> {
        if population == 0 {
            return Err(PrimeError::Data(format!("nonpositive population for {region}/{year}")));
        }
        let key = (region, year);
        if self.entries.contains_key(&key) {
            return Err(PrimeError::Data(format!(
                "duplicate population entry for {}/{}",
                key.0, key.1
            )));
        }
        self.entries.insert(key, population);
        Ok(())
    }

    pub fn get(&self, region: &RegionCode, year: i32) -> Option<u64> {
        self.entries.get(&(region.clone(), year)).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&RegionCode, i32, u64)> {
        self.entries.iter().map(|((r, y), p)| (r, *y, *p))
    }
}

pub fn load_population(path: impl AsRef<Path>) -> Result<PopulationPanel> {
    read_population(open(path.as_ref())?)
}

pub fn read_population<R: Read>(reader: R) -> Result<PopulationPanel> {
    let mut rdr = csv_reader(reader);
    let headers = rdr.headers()?.clone();
    let region_idx = aliased_column(&headers, &["UniqueCode", "region_code"])?;
    let year_idx = aliased_column(&headers, &["Year"])?;
    let pop_idx = aliased_column(&headers, &["Population"])?;

    let mut panel = PopulationPanel::default();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let get = |idx: usize| record.get(idx).unwrap_or("");
        let region = RegionCode::new(get(region_idx));
        let year: i32 = get(year_idx)
            .parse()
            .map_err(|_| PrimeError::Data(format!("row {row}: unparseable year `{}`", get(year_idx))))?;
        let raw = get(pop_idx);
        let pop: f64 = raw
            .parse()
            .map_err(|_| PrimeError::Data(format!("row {row}: unparseable population `{raw}`")))?;
        if !(pop > 0.0) {
            return Err(PrimeError::Data(format!("nonpositive population for {region}/{year}")));
        }
        if pop.fract() != 0.0 {
            return Err(PrimeError::Data(format!("row {row}: population `{raw}` is not a whole count")));
        }
        panel.insert(region, year, pop as u64)?;
    }
    Ok(panel)
}

/// Yearly indicator vectors per region. Missing observations are `NaN`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SocioPanel {
    indicators: Vec<String>,
    rows: BTreeMap<(RegionCode, i32), Vec<f64>>,
}

impl SocioPanel {
    pub fn new(indicators: Vec<String>) -> Self {
        SocioPanel {
            indicators,
            rows: BTreeMap::new(),
        }
    }

    pub fn indicators(&self) -> &[String] {
        &self.indicators
    }

    pub fn insert(&mut self, region: RegionCode, year: i32, values: Vec<f64>) -> Result<()> {
        if values.len() != self.indicators.len() {
            return Err(PrimeError::Data(format!(
                "{region}/{year}: expected {} indicator values, got {}",
                self.indicators.len(),
                values.len()
            )));
        }
        let key = (region, year);
        if self.rows.contains_key(&key) {
            return Err(PrimeError::Data(format!(
                "duplicate socioeconomic row for {}/{}",
                key.0, key.1
            )));
        }
        self.rows.insert(key, values);
        Ok(())
    }

    pub fn get(&self, region: &RegionCode, year: i32) -> Option<&[f64]> {
        self.rows.get(&(region.clone(), year)).map(Vec::as_slice)
    }

    pub fn regions(&self) -> BTreeSet<RegionCode> {
        self.rows.keys().map(|(r, _)| r.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&RegionCode, i32, &[f64])> {
        self.rows.iter().map(|((r, y), v)| (r, *y, v.as_slice()))
    }

    /// Restricts the panel to `names`, in the given order.
    pub fn select(&self, names: &[String]) -> Result<SocioPanel> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.indicators
                    .iter()
                    .position(|i| i == n)
                    .ok_or_else(|| PrimeError::invalid("indicators", format!("unknown indicator `{n}`")))
            })
            .collect::<Result<_>>()?;
        Ok(SocioPanel {
            indicators: names.to_vec(),
            rows: self
                .rows
                .iter()
                .map(|(k, v)| (k.clone(), idx.iter().map(|&i| v[i]).collect()))
                .collect(),
        })
    }
}

pub fn load_socio(path: impl AsRef<Path>) -> Result<SocioPanel> {
    read_socio(open(path.as_ref())?)
}

/// Reads a socioeconomic table; every column other than region and year is an indicator.
pub fn read_socio<R: Read>(reader: R) -> Result<SocioPanel> {
    let mut rdr = csv_reader(reader);
    let headers = rdr.headers()?.clone();
    let region_idx = aliased_column(&headers, &["UniqueCode", "region_code"])?;
    let year_idx = aliased_column(&headers, &["Year"])?;
    let indicator_cols: Vec<usize> = (0..headers.len())
        .filter(|&i| i != region_idx && i != year_idx)
        .collect();
    let mut panel = SocioPanel::new(indicator_cols.iter().map(|&i| headers[i].to_string()).collect());
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let get = |idx: usize| record.get(idx).unwrap_or("");
        let year: i32 = get(year_idx)
            .parse()
            .map_err(|_| PrimeError::Data(format!("row {row}: unparseable year `{}`", get(year_idx))))?;
        let values = indicator_cols
            .iter()
            .map(|&c| {
                let raw = get(c);
                if raw.is_empty() || raw.eq_ignore_ascii_case("na") {
                    Ok(f64::NAN)
                } else {
                    raw.parse::<f64>().map_err(|_| {
                        PrimeError::Data(format!("row {row}: unparseable value `{raw}` for `{}`", &headers[c]))
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        panel.insert(RegionCode::new(get(region_idx)), year, values)?;
    }
    Ok(panel)
}

pub fn write_socio<W: Write>(writer: W, panel: &SocioPanel) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["UniqueCode".to_string(), "Year".to_string()];
    header.extend(panel.indicators.iter().cloned());
    wtr.write_record(&header)?;
    for ((region, year), values) in &panel.rows {
        let mut rec = vec![region.to_string(), year.to_string()];
        rec.extend(values.iter().map(|v| if v.is_nan() { String::new() } else { v.to_string() }));
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|e| PrimeError::io("<writer>", e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterpolationOptions {
    /// Fraction of the observed series used as the local neighbourhood.
    pub span: f64,
    /// Clamp filled values to the observed range of the series.
    pub clamp: bool,
}

impl Default for InterpolationOptions {
    fn default() -> Self {
        InterpolationOptions { span: 0.75, clamp: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparseSeries {
    pub region: RegionCode,
    pub indicator: String,
    pub observations: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InterpolationReport {
    pub excluded_regions: Vec<RegionCode>,
    pub sparse_series: Vec<SparseSeries>,
    pub filled_values: usize,
}

fn tricube(u: f64) -> f64 {
    if u >= 1.0 {
        0.0
    } else {
        let t = 1.0 - u * u * u;
        t * t * t
    }
}

/// Local-linear Loess estimate at `x` from `(x, y)` support points.
///
/// The neighbourhood holds the `ceil(span * n)` nearest points (at least two).
/// Bandwidth is the distance to the farthest of them plus half a year, so every
/// point in the neighbourhood carries positive tricube weight.
pub fn loess_estimate(points: &[(f64, f64)], x: f64, span: f64) -> f64 {
    let n = points.len();
    debug_assert!(n >= 2);
    let q = ((span * n as f64).ceil() as usize).clamp(2, n);
    let mut dists: Vec<f64> = points.iter().map(|(px, _)| (px - x).abs()).collect();
    dists.sort_by(f64::total_cmp);
    let h = dists[q - 1] + 0.5;

    let mut sw = 0.0;
    let mut swx = 0.0;
    let mut swy = 0.0;
    let weights: Vec<f64> = points.iter().map(|(px, _)| tricube((px - x).abs() / h)).collect();
    for (&(px, py), &w) in points.iter().zip(&weights) {
        sw += w;
        swx += w * px;
        swy += w * py;
    }
    let mx = swx / sw;
    let my = swy / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&(px, py), &w) in points.iter().zip(&weights) {
        sxx += w * (px - mx) * (px - mx);
        sxy += w * (px - mx) * (py - my);
    }
    let slope = if sxx > 1e-12 { sxy / sxx } else { 0.0 };
    my + slope * (x - mx)
}

/// Fills every year of `years` for every region by per-series Loess trend interpolation.
///
/// Observed values pass through unchanged. A region with any indicator series
/// holding fewer than two observations is dropped and reported.
pub fn interpolate_socio_panel(
    panel: &SocioPanel,
    years: RangeInclusive<i32>,
    opts: &InterpolationOptions,
) -> Result<(SocioPanel, InterpolationReport)> {
    if years.is_empty() {
        return Err(PrimeError::invalid("years", "empty target year range"));
    }
    if !(opts.span > 0.0) {
        return Err(PrimeError::invalid("span", "span must be positive"));
    }
    let mut out = SocioPanel::new(panel.indicators.clone());
    let mut report = InterpolationReport::default();
    let n_ind = panel.indicators.len();

    for region in panel.regions() {
        let rows: Vec<(i32, &Vec<f64>)> = panel
            .rows
            .range((region.clone(), i32::MIN)..=(region.clone(), i32::MAX))
            .map(|((_, y), v)| (*y, v))
            .collect();
        let series: Vec<Vec<(f64, f64)>> = (0..n_ind)
            .map(|j| {
                rows.iter()
                    .filter(|(_, v)| v[j].is_finite())
                    .map(|(y, v)| (*y as f64, v[j]))
                    .collect()
            })
            .collect();
        let mut sparse = false;
        for (j, s) in series.iter().enumerate() {
            if s.len() < 2 {
                sparse = true;
                report.sparse_series.push(SparseSeries {
                    region: region.clone(),
                    indicator: panel.indicators[j].clone(),
                    observations: s.len(),
                });
            }
        }
        if sparse {
            report.excluded_regions.push(region);
            continue;
        }
        for year in years.clone() {
            let observed = panel.get(&region, year);
            let values = (0..n_ind)
                .map(|j| match observed.map(|v| v[j]).filter(|v| v.is_finite()) {
                    Some(v) => v,
                    None => {
                        report.filled_values += 1;
                        let s = &series[j];
                        let est = loess_estimate(s, year as f64, opts.span);
                        if opts.clamp {
                            let lo = s.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
                            let hi = s.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
                            est.clamp(lo, hi)
                        } else {
                            est
                        }
                    }
                })
                .collect();
            out.insert(region.clone(), year, values)?;
        }
    }
    Ok((out, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionGeometry {
    pub region_code: RegionCode,
    pub name: String,
    pub geometry: geojson::Geometry,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GeometrySet {
    pub regions: BTreeMap<RegionCode, RegionGeometry>,
}

impl GeometrySet {
    pub fn get(&self, code: &RegionCode) -> Option<&RegionGeometry> {
        self.regions.get(code)
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }
}

pub fn load_geometry(path: impl AsRef<Path>) -> Result<GeometrySet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| PrimeError::io(path, e))?;
    read_geometry(&text)
}

/// Parses a feature collection whose features carry a `UniqueCode` property.
pub fn read_geometry(text: &str) -> Result<GeometrySet> {
    let gj: geojson::GeoJson = text.parse().map_err(|e| PrimeError::Geometry(format!("{e}")))?;
    let fc = match gj {
        geojson::GeoJson::FeatureCollection(fc) => fc,
        _ => return Err(PrimeError::Geometry("expected a FeatureCollection".into())),
    };
    let mut set = GeometrySet::default();
    for (i, feature) in fc.features.into_iter().enumerate() {
        let props = feature.properties.unwrap_or_default();
        let code = match props.get("UniqueCode") {
            Some(serde_json::Value::String(s)) => s.clone(),
            Some(serde_json::Value::Number(n)) => match n.as_u64() {
                Some(v) => format!("{v:05}"),
                None => n.to_string(),
            },
            _ => return Err(PrimeError::Geometry(format!("feature {i} has no UniqueCode property"))),
        };
        let name = ["name", "NAME", "Name"]
            .iter()
            .find_map(|k| props.get(*k).and_then(|v| v.as_str()))
            .unwrap_or(&code)
            .to_string();
        let geometry = feature
            .geometry
            .ok_or_else(|| PrimeError::Geometry(format!("feature {code} has no geometry")))?;
        if !matches!(
            geometry.value,
            geojson::Value::Polygon(_) | geojson::Value::MultiPolygon(_)
        ) {
            return Err(PrimeError::Geometry(format!("feature {code} is not a polygon")));
        }
        let region_code = RegionCode::new(code);
        set.regions.insert(
            region_code.clone(),
            RegionGeometry {
                region_code,
                name,
                geometry,
            },
        );
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "UniqueCode,Disaster,Year,DamageRIM,Duration (days)\n";

    fn load(body: &str) -> HazardLoad {
        read_hazard_events(format!("{HEADER}{body}").as_bytes(), &HazardLoadOptions::default()).unwrap()
    }

    #[test]
    fn loads_single_documented_row() {
        let load = load("48041,Flood,2017,12.5,3\n");
        assert_eq!(
            load.events,
            vec![HazardEvent {
                region_code: "48041".into(),
                hazard_type: "Flood".into(),
                year: 2017,
                damage_per_capita: 12.5,
                duration_days: 3.0,
                date: None,
            }]
        );
        assert!(load.report.rejections.is_empty());
    }

    #[test]
    fn header_only_is_empty() {
        let load = load("");
        assert!(load.events.is_empty());
        assert_eq!(load.report, ValidationReport::default());
    }

    #[test]
    fn zero_duration_rejected() {
        let load = load("48041,Flood,2017,12.5,0\n");
        assert!(load.events.is_empty());
        assert_eq!(load.report.rejections.len(), 1);
        assert_eq!(load.report.rejections[0].reason, "nonpositive duration");
    }

    #[test]
    fn bad_rows_are_recorded_not_fatal() {
        let load = load("48041,Flood,2017,abc,3\n4804,Flood,2017,1,3\n48041,Flood,2017,-1,3\n48041,Hail,2018,1,2\n");
        assert_eq!(load.events.len(), 1);
        let reasons: Vec<_> = load.report.rejections.iter().map(|r| r.reason.as_str()).collect();
        assert_eq!(
            reasons,
            ["unparseable DamageRIM", "invalid region code `4804`", "negative damage"]
        );
        assert_eq!(load.report.rows_in, 4);
    }

    #[test]
    fn missing_column_is_fatal() {
        let err = read_hazard_events(
            "UniqueCode,Disaster,Year,DamageRIM\n48041,Flood,2017,1\n".as_bytes(),
            &HazardLoadOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, PrimeError::MissingColumn { ref column } if column == "Duration (days)"));
    }

    #[test]
    fn mapped_columns_and_dates() {
        let opts = HazardLoadOptions {
            schema: HazardSchema {
                region_code: "fips".into(),
                hazard_type: "kind".into(),
                year: "yr".into(),
                damage_per_capita: "dmg".into(),
                duration_days: "days".into(),
                date: "onset".into(),
            },
            year_bounds: Some((2000, 2020)),
            ..Default::default()
        };
        let load = read_hazard_events(
            "fips,kind,yr,dmg,days,onset\n\"48041\",Flood,2017,1,2,2017-08-25\n48041,Flood,1990,1,2,\n".as_bytes(),
            &opts,
        )
        .unwrap();
        assert_eq!(load.events.len(), 1);
        assert_eq!(load.events[0].date, NaiveDate::from_ymd_opt(2017, 8, 25));
        assert!(load.report.rejections[0].reason.contains("outside study bounds"));
    }

    #[test]
    fn population_load_and_errors() {
        let panel = read_population("UniqueCode,Year,Population\n48041,2016,1000\n48041,2018,1100\n".as_bytes()).unwrap();
        assert_eq!(panel.len(), 2);
        assert_eq!(panel.get(&"48041".into(), 2018), Some(1100));

        let dup = read_population("UniqueCode,Year,Population\n48041,2016,1000\n48041,2016,1000\n".as_bytes())
            .unwrap_err()
            .to_string();
        assert!(dup.contains("48041/2016"), "{dup}");

        let neg = read_population("region_code,year,population\n48041,2016,-5\n".as_bytes())
            .unwrap_err()
            .to_string();
        assert!(neg.contains("nonpositive population"), "{neg}");
    }

    fn single_series(points: &[(i32, f64)]) -> SocioPanel {
        let mut p = SocioPanel::new(vec!["v".into()]);
        for &(y, v) in points {
            p.insert("48041".into(), y, vec![v]).unwrap();
        }
        p
    }

    #[test]
    fn interpolation_passes_observed_through() {
        let panel = single_series(&[(2000, 10.0), (2010, 20.0), (2020, 30.0)]);
        let (out, report) = interpolate_socio_panel(&panel, 2000..=2020, &Default::default()).unwrap();
        assert_eq!(out.len(), 21);
        assert_eq!(out.get(&"48041".into(), 2010).unwrap()[0], 20.0);
        assert_eq!(report.filled_values, 18);
    }

    #[test]
    fn constant_series_fills_constant() {
        let panel = single_series(&[(2000, 10.0), (2020, 10.0)]);
        let (out, _) = interpolate_socio_panel(&panel, 2000..=2020, &Default::default()).unwrap();
        for (_, _, v) in out.iter() {
            assert_eq!(v[0], 10.0);
        }
    }

    #[test]
    fn two_point_series_is_the_chord() {
        // Weighted least squares by hand: both support points sit 5 years away,
        // so they get equal weight and the local line is the chord through them.
        let w = tricube(5.0 / 5.5);
        let (x0, y0, x1, y1) = (2010.0, 0.0, 2020.0, 10.0);
        let mx = (w * x0 + w * x1) / (2.0 * w);
        let my = (w * y0 + w * y1) / (2.0 * w);
        let slope = (w * (x0 - mx) * (y0 - my) + w * (x1 - mx) * (y1 - my))
            / (w * (x0 - mx).powi(2) + w * (x1 - mx).powi(2));
        let hand = my + slope * (2015.0 - mx);
        assert!((hand - 5.0).abs() < 1e-12);

        let panel = single_series(&[(2010, 0.0), (2020, 10.0)]);
        let (out, _) = interpolate_socio_panel(&panel, 2010..=2020, &Default::default()).unwrap();
        let v = out.get(&"48041".into(), 2015).unwrap()[0];
        assert!((v - hand).abs() < 1e-9, "{v}");
    }

    #[test]
    fn sparse_series_excludes_region() {
        let mut panel = SocioPanel::new(vec!["a".into(), "b".into()]);
        panel.insert("48041".into(), 2000, vec![1.0, f64::NAN]).unwrap();
        panel.insert("48041".into(), 2010, vec![2.0, 3.0]).unwrap();
        panel.insert("48043".into(), 2000, vec![1.0, 1.0]).unwrap();
        panel.insert("48043".into(), 2010, vec![2.0, 3.0]).unwrap();
        let (out, report) = interpolate_socio_panel(&panel, 2000..=2010, &Default::default()).unwrap();
        assert_eq!(report.excluded_regions, vec![RegionCode::from("48041")]);
        assert_eq!(report.sparse_series[0].indicator, "b");
        assert_eq!(out.regions().len(), 1);
    }

    #[test]
    fn unclamped_extrapolation_can_leave_range() {
        let panel = single_series(&[(2010, 0.0), (2011, 1.0), (2012, 2.0)]);
        let opts = InterpolationOptions { clamp: false, ..Default::default() };
        let (out, _) = interpolate_socio_panel(&panel, 2010..=2014, &opts).unwrap();
        assert!(out.get(&"48041".into(), 2014).unwrap()[0] > 2.0);
        let (out, _) = interpolate_socio_panel(&panel, 2010..=2014, &Default::default()).unwrap();
        assert_eq!(out.get(&"48041".into(), 2014).unwrap()[0], 2.0);
    }

    #[test]
    fn geometry_keys_by_unique_code() {
        let text = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","properties":{"UniqueCode":"48041","NAME":"Brazos"},
             "geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,0]]]}},
            {"type":"Feature","properties":{"UniqueCode":1001},
             "geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,0]]]}}]}"#;
        let set = read_geometry(text).unwrap();
        assert_eq!(set.get(&"48041".into()).unwrap().name, "Brazos");
        assert!(set.get(&"01001".into()).is_some());
    }
}

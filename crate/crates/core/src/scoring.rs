//! Empirical threat, damage and recovery parameters and the composite
//! vulnerability / adaptability / resilience scores derived from them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{PrimeError, Result};
use crate::ingest::{HazardEvent, PopulationPanel, RegionCode};

pub type RegionYear = (RegionCode, i32);

/// Inclusive range of calendar years.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearWindow {
    pub start: i32,
    pub end: i32,
}

impl YearWindow {
    pub fn new(start: i32, end: i32) -> Result<Self> {
        if end < start {
            return Err(PrimeError::invalid("years", format!("empty year range {start}:{end}")));
        }
        Ok(YearWindow { start, end })
    }

    pub fn contains(&self, year: i32) -> bool {
        (self.start..=self.end).contains(&year)
    }

    /// Calendar days from 1 January of `start` through 31 December of `end`.
    pub fn days(&self) -> i64 {
        let first = NaiveDate::from_ymd_opt(self.start, 1, 1).expect("valid year");
        let after = NaiveDate::from_ymd_opt(self.end + 1, 1, 1).expect("valid year");
        (after - first).num_days()
    }

    pub fn years(&self) -> impl Iterator<Item = i32> {
        self.start..=self.end
    }
}

impl fmt::Display for YearWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardTypeStats {
    pub hazard_type: String,
    pub count: usize,
    /// Events per calendar day of the window.
    pub likelihood: f64,
    /// Mean per-capita damage per event day.
    pub weightage: f64,
}

pub fn compute_hazard_stats(
    events: &[HazardEvent],
    window: YearWindow,
) -> Result<BTreeMap<String, HazardTypeStats>> {
    let days = window.days();
    if days <= 0 {
        return Err(PrimeError::invalid("window", "window has no days"));
    }
    let mut acc: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
    for e in events.iter().filter(|e| window.contains(e.year)) {
        let slot = acc.entry(&e.hazard_type).or_default();
        slot.0 += 1;
        slot.1 += e.damage_per_capita / e.duration_days;
    }
    Ok(acc
        .into_iter()
        .map(|(t, (count, per_day_sum))| {
            (
                t.to_string(),
                HazardTypeStats {
                    hazard_type: t.to_string(),
                    count,
                    likelihood: count as f64 / days as f64,
                    weightage: per_day_sum / count as f64,
                },
            )
        })
        .collect())
}

/// Sums `duration * likelihood * weightage` per region-year, in event order.
pub fn compute_threat(
    events: &[HazardEvent],
    stats: &BTreeMap<String, HazardTypeStats>,
) -> Result<BTreeMap<RegionYear, f64>> {
    let mut threat = BTreeMap::new();
    for e in events {
        let s = stats
            .get(&e.hazard_type)
            .ok_or_else(|| PrimeError::UnknownHazardType(e.hazard_type.clone()))?;
        *threat.entry((e.region_code.clone(), e.year)).or_insert(0.0) +=
            e.duration_days * s.likelihood * s.weightage;
    }
    Ok(threat)
}

/// Sums stored per-capita damage per region-year, in event order.
pub fn compute_damage(events: &[HazardEvent]) -> BTreeMap<RegionYear, f64> {
    let mut damage = BTreeMap::new();
    for e in events {
        *damage.entry((e.region_code.clone(), e.year)).or_insert(0.0) += e.damage_per_capita;
    }
    damage
}

/// Population change from the year before to the year after `year`, relative
/// to the year before.
pub fn compute_recovery(pop: &PopulationPanel, region: &RegionCode, year: i32) -> Result<f64> {
    let before = pop.get(region, year - 1);
    let after = pop.get(region, year + 1);
    match (before, after) {
        (Some(b), Some(a)) => Ok((a as f64 - b as f64) / b as f64),
        _ => {
            let missing: Vec<String> = [(year - 1, before), (year + 1, after)]
                .iter()
                .filter(|(_, p)| p.is_none())
                .map(|(y, _)| y.to_string())
                .collect();
            Err(PrimeError::Data(format!(
                "incomplete population for {region}/{year}: missing {}",
                missing.join(", ")
            )))
        }
    }
}

/// Min-max scaling to [0, 1]; a constant column maps to all zeros.
pub fn min_max_normalize<K: Ord + Clone>(values: &BTreeMap<K, f64>) -> Result<BTreeMap<K, f64>> {
    if values.is_empty() {
        return Err(PrimeError::Empty("cannot normalize an empty column".into()));
    }
    let (lo, hi) = values
        .values()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    Ok(values
        .iter()
        .map(|(k, &v)| {
            let n = if range > 0.0 { ((v - lo) / range).clamp(0.0, 1.0) } else { 0.0 };
            (k.clone(), n)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    PerYear,
    Window,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreOptions {
    pub aggregation: Aggregation,
    /// In per-year mode, normalize across all region-years at once instead of
    /// within each year.
    pub pooled: bool,
}

/// The time unit a score row refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Period {
    Year(i32),
    Window(i32, i32),
}

impl Period {
    /// Year whose socioeconomic conditions precede this period.
    pub fn lag_year(&self) -> i32 {
        match *self {
            Period::Year(y) => y - 1,
            Period::Window(start, _) => start - 1,
        }
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Period::Year(y) => write!(f, "{y}"),
            Period::Window(a, b) => write!(f, "{a}-{b}"),
        }
    }
}

impl std::str::FromStr for Period {
    type Err = PrimeError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || PrimeError::invalid("period", format!("unparseable period `{s}`"));
        match s.split_once('-') {
            Some((a, b)) if !a.is_empty() => {
                Ok(Period::Window(a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?))
            }
            _ => Ok(Period::Year(s.parse().map_err(|_| bad())?)),
        }
    }
}

impl Serialize for Period {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Period {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionYearScores {
    pub region_code: RegionCode,
    pub period: Period,
    pub threat_raw: f64,
    pub damage_raw: f64,
    pub recovery_raw: f64,
    pub threat_norm: f64,
    pub damage_norm: f64,
    pub recovery_norm: f64,
    pub vulnerability: f64,
    pub adaptability: f64,
    pub resilience: f64,
}

impl RegionYearScores {
    pub fn score(&self, kind: ScoreKind) -> f64 {
        match kind {
            ScoreKind::Vulnerability => self.vulnerability,
            ScoreKind::Adaptability => self.adaptability,
            ScoreKind::Resilience => self.resilience,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    Vulnerability,
    Adaptability,
    Resilience,
}

impl ScoreKind {
    pub const ALL: [ScoreKind; 3] = [ScoreKind::Vulnerability, ScoreKind::Adaptability, ScoreKind::Resilience];

    pub fn as_str(&self) -> &'static str {
        match self {
            ScoreKind::Vulnerability => "vulnerability",
            ScoreKind::Adaptability => "adaptability",
            ScoreKind::Resilience => "resilience",
        }
    }

    pub fn title(&self) -> &'static str {
        match self {
            ScoreKind::Vulnerability => "Vulnerability Score",
            ScoreKind::Adaptability => "Adaptability Score",
            ScoreKind::Resilience => "Resilience Score",
        }
    }
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ScoreKind {
    type Err = PrimeError;

    fn from_str(s: &str) -> Result<Self> {
        ScoreKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| PrimeError::invalid("targets", format!("unknown target `{s}`")))
    }
}

fn check_keys(
    threat: &BTreeMap<RegionYear, f64>,
    damage: &BTreeMap<RegionYear, f64>,
    recovery: &BTreeMap<RegionYear, f64>,
) -> Result<()> {
    let t: BTreeSet<_> = threat.keys().collect();
    let d: BTreeSet<_> = damage.keys().collect();
    let r: BTreeSet<_> = recovery.keys().collect();
    if t == d && d == r {
        return Ok(());
    }
    let union: BTreeSet<_> = t.union(&d).chain(r.iter()).copied().collect();
    let diff = union
        .into_iter()
        .filter(|k| !(t.contains(k) && d.contains(k) && r.contains(k)))
        .map(|(region, year)| format!("{region}/{year}"))
        .collect();
    Err(PrimeError::KeyMismatch(diff))
}

fn score_unit(
    keys: Vec<(RegionCode, Period)>,
    threat: Vec<f64>,
    damage: Vec<f64>,
    recovery: Vec<f64>,
    out: &mut Vec<RegionYearScores>,
) -> Result<()> {
    // Positional keys so a pooled unit may repeat a region across years.
    let column = |v: &[f64]| min_max_normalize(&v.iter().copied().enumerate().collect());
    let (tn, dn, rn) = (column(&threat)?, column(&damage)?, column(&recovery)?);
    for (i, (region_code, period)) in keys.into_iter().enumerate() {
        let vulnerability = dn[&i] - tn[&i];
        let adaptability = rn[&i] - dn[&i];
        out.push(RegionYearScores {
            region_code,
            period,
            threat_raw: threat[i],
            damage_raw: damage[i],
            recovery_raw: recovery[i],
            threat_norm: tn[&i],
            damage_norm: dn[&i],
            recovery_norm: rn[&i],
            vulnerability,
            adaptability,
            resilience: adaptability - vulnerability,
        });
    }
    Ok(())
}

/// Normalizes the three raw parameters and derives the composite scores.
///
/// Per-year mode normalizes within each year (or across all region-years when
/// `pooled`). Window mode sums threat and damage, averages recovery rates per
/// region, and normalizes once.
pub fn compute_scores(
    threat: &BTreeMap<RegionYear, f64>,
    damage: &BTreeMap<RegionYear, f64>,
    recovery: &BTreeMap<RegionYear, f64>,
    window: YearWindow,
    opts: ScoreOptions,
) -> Result<Vec<RegionYearScores>> {
    check_keys(threat, damage, recovery)?;
    let mut out = Vec::with_capacity(threat.len());
    if threat.is_empty() {
        return Ok(out);
    }
    match opts.aggregation {
        Aggregation::PerYear if opts.pooled => {
            let keys = threat.keys().map(|(r, y)| (r.clone(), Period::Year(*y))).collect();
            let values = |m: &BTreeMap<RegionYear, f64>| m.values().copied().collect();
            score_unit(keys, values(threat), values(damage), values(recovery), &mut out)?;
            out.sort_by(|a, b| (a.period, &a.region_code).cmp(&(b.period, &b.region_code)));
        }
        Aggregation::PerYear => {
            let years: BTreeSet<i32> = threat.keys().map(|(_, y)| *y).collect();
            for year in years {
                let pick = |m: &BTreeMap<RegionYear, f64>| -> Vec<f64> {
                    m.iter().filter(|((_, y), _)| *y == year).map(|(_, v)| *v).collect()
                };
                let keys = threat
                    .keys()
                    .filter(|(_, y)| *y == year)
                    .map(|(r, _)| (r.clone(), Period::Year(year)))
                    .collect();
                score_unit(keys, pick(threat), pick(damage), pick(recovery), &mut out)?;
            }
        }
        Aggregation::Window => {
            let mut t: BTreeMap<RegionCode, f64> = BTreeMap::new();
            let mut d: BTreeMap<RegionCode, f64> = BTreeMap::new();
            let mut r: BTreeMap<RegionCode, (f64, usize)> = BTreeMap::new();
            for ((region, _), v) in threat {
                *t.entry(region.clone()).or_default() += v;
            }
            for ((region, _), v) in damage {
                *d.entry(region.clone()).or_default() += v;
            }
            for ((region, _), v) in recovery {
                let slot = r.entry(region.clone()).or_default();
                slot.0 += v;
                slot.1 += 1;
            }
            let r: BTreeMap<RegionCode, f64> = r.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect();
            let period = Period::Window(window.start, window.end);
            let keys = t.keys().map(|r| (r.clone(), period)).collect();
            let values = |m: &BTreeMap<RegionCode, f64>| m.values().copied().collect();
            score_unit(keys, values(&t), values(&d), values(&r), &mut out)?;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncompleteRegionYear {
    pub region_code: RegionCode,
    pub year: i32,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRun {
    pub window: YearWindow,
    pub options: ScoreOptions,
    pub hazard_stats: BTreeMap<String, HazardTypeStats>,
    pub scores: Vec<RegionYearScores>,
    pub incomplete: Vec<IncompleteRegionYear>,
    pub events_used: usize,
}

/// Runs the full scoring chain for the events inside `window`.
///
/// Region-years lacking population before or after the event year are
/// excluded from normalization and reported in `incomplete`.
pub fn score_events(
    events: &[HazardEvent],
    pop: &PopulationPanel,
    window: YearWindow,
    opts: ScoreOptions,
) -> Result<ScoreRun> {
    let mut in_window: Vec<HazardEvent> = events.iter().filter(|e| window.contains(e.year)).cloned().collect();
    // Canonical order, so floating-point sums do not depend on input order.
    in_window.sort_by(|a, b| {
        (&a.region_code, a.year, &a.hazard_type, a.date)
            .cmp(&(&b.region_code, b.year, &b.hazard_type, b.date))
            .then(a.damage_per_capita.total_cmp(&b.damage_per_capita))
            .then(a.duration_days.total_cmp(&b.duration_days))
    });
    let hazard_stats = compute_hazard_stats(&in_window, window)?;
    let mut threat = compute_threat(&in_window, &hazard_stats)?;
    let mut damage = compute_damage(&in_window);
    let mut recovery = BTreeMap::new();
    let mut incomplete = Vec::new();
    for (region, year) in threat.keys() {
        match compute_recovery(pop, region, *year) {
            Ok(r) => {
                recovery.insert((region.clone(), *year), r);
            }
            Err(e) => incomplete.push(IncompleteRegionYear {
                region_code: region.clone(),
                year: *year,
                reason: e.to_string(),
            }),
        }
    }
    for miss in &incomplete {
        let key = (miss.region_code.clone(), miss.year);
        threat.remove(&key);
        damage.remove(&key);
    }
    let scores = compute_scores(&threat, &damage, &recovery, window, opts)?;
    Ok(ScoreRun {
        window,
        options: opts,
        hazard_stats,
        scores,
        incomplete,
        events_used: in_window.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification<K: Ord> {
    pub classes: BTreeMap<K, u8>,
    /// Upper boundaries of classes 1..n-1.
    pub boundaries: Vec<f64>,
    pub warning: Option<String>,
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Assigns each value the class `k` with `q((k-1)/n) < v <= q(k/n)`; values on
/// a boundary take the lower class.
pub fn quantile_classify<K: Ord + Clone>(scores: &BTreeMap<K, f64>, n_classes: usize) -> Result<Classification<K>> {
    if scores.is_empty() {
        return Err(PrimeError::Empty("cannot classify an empty score set".into()));
    }
    if n_classes == 0 || n_classes > u8::MAX as usize {
        return Err(PrimeError::invalid("n_classes", "must be between 1 and 255"));
    }
    let mut sorted: Vec<f64> = scores.values().copied().collect();
    sorted.sort_by(f64::total_cmp);
    let boundaries: Vec<f64> = (1..n_classes).map(|k| quantile(&sorted, k as f64 / n_classes as f64)).collect();
    let mut distinct = sorted.clone();
    distinct.dedup();
    let warning = (distinct.len() < n_classes).then(|| {
        format!(
            "{} distinct values for {n_classes} classes; some classes are degenerate",
            distinct.len()
        )
    });
    let classes = scores
        .iter()
        .map(|(k, &v)| {
            let class = boundaries.iter().position(|&b| v <= b).map_or(n_classes, |i| i + 1);
            (k.clone(), class as u8)
        })
        .collect();
    Ok(Classification {
        classes,
        boundaries,
        warning,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreClasses {
    pub v_class: u8,
    pub a_class: u8,
    pub r_class: u8,
}

/// Quartile classes for every row, computed within each period.
pub fn classify_scores(scores: &[RegionYearScores]) -> Result<(Vec<ScoreClasses>, Vec<String>)> {
    let mut classes = vec![
        ScoreClasses {
            v_class: 0,
            a_class: 0,
            r_class: 0
        };
        scores.len()
    ];
    let mut warnings = Vec::new();
    let periods: BTreeSet<Period> = scores.iter().map(|s| s.period).collect();
    for period in periods {
        let idx: Vec<usize> = (0..scores.len()).filter(|&i| scores[i].period == period).collect();
        for kind in ScoreKind::ALL {
            let values: BTreeMap<usize, f64> = idx.iter().map(|&i| (i, scores[i].score(kind))).collect();
            let c = quantile_classify(&values, 4)?;
            if let Some(w) = c.warning {
                warnings.push(format!("{period} {kind}: {w}"));
            }
            for (i, class) in c.classes {
                match kind {
                    ScoreKind::Vulnerability => classes[i].v_class = class,
                    ScoreKind::Adaptability => classes[i].a_class = class,
                    ScoreKind::Resilience => classes[i].r_class = class,
                }
            }
        }
    }
    Ok((classes, warnings))
}

/// Per-region mean of each score over all periods, for map display.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSummary {
    pub region_code: RegionCode,
    pub vulnerability: f64,
    pub adaptability: f64,
    pub resilience: f64,
    pub periods: usize,
}

pub fn region_summaries(scores: &[RegionYearScores]) -> Vec<RegionSummary> {
    let mut acc: BTreeMap<&RegionCode, [f64; 4]> = BTreeMap::new();
    for s in scores {
        let slot = acc.entry(&s.region_code).or_default();
        slot[0] += s.vulnerability;
        slot[1] += s.adaptability;
        slot[2] += s.resilience;
        slot[3] += 1.0;
    }
    acc.into_iter()
        .map(|(r, [v, a, res, n])| RegionSummary {
            region_code: r.clone(),
            vulnerability: v / n,
            adaptability: a / n,
            resilience: res / n,
            periods: n as usize,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(region: &str, kind: &str, year: i32, damage: f64, duration: f64) -> HazardEvent {
        HazardEvent {
            region_code: region.into(),
            hazard_type: kind.into(),
            year,
            damage_per_capita: damage,
            duration_days: duration,
            date: None,
        }
    }

    fn map<K: Ord>(pairs: impl IntoIterator<Item = (K, f64)>) -> BTreeMap<K, f64> {
        pairs.into_iter().collect()
    }

    #[test]
    fn window_days() {
        assert_eq!(YearWindow::new(2017, 2017).unwrap().days(), 365);
        assert_eq!(YearWindow::new(2016, 2016).unwrap().days(), 366);
        assert_eq!(YearWindow::new(2000, 2020).unwrap().days(), 7671);
        assert!(YearWindow::new(2020, 2019).is_err());
    }

    #[test]
    fn likelihood_counts_records() {
        let events: Vec<_> = (0..3).map(|_| ev("48041", "Flood", 2017, 1.0, 1.0)).collect();
        let stats = compute_hazard_stats(&events, YearWindow::new(2017, 2017).unwrap()).unwrap();
        let count = events.iter().filter(|e| e.hazard_type == "Flood").count() as f64;
        assert_eq!(stats["Flood"].likelihood, count / 365.0);
        assert!((stats["Flood"].likelihood - 0.0082192).abs() < 1e-7);
    }

    #[test]
    fn weightage_is_mean_per_day_damage() {
        let events = [ev("48041", "Flood", 2017, 10.0, 2.0), ev("48041", "Flood", 2017, 20.0, 4.0)];
        let stats = compute_hazard_stats(&events, YearWindow::new(2017, 2017).unwrap()).unwrap();
        assert_eq!(stats["Flood"].weightage, 5.0);

        let zero = [ev("48041", "Fog", 2017, 0.0, 1.0)];
        let stats = compute_hazard_stats(&zero, YearWindow::new(2017, 2017).unwrap()).unwrap();
        assert_eq!(stats["Fog"].weightage, 0.0);
        assert_eq!(stats["Fog"].likelihood, 1.0 / 365.0);
        assert!(compute_hazard_stats(&[], YearWindow::new(2017, 2017).unwrap()).unwrap().is_empty());
    }

    fn fixed_stats() -> BTreeMap<String, HazardTypeStats> {
        let mut s = BTreeMap::new();
        s.insert(
            "Flood".to_string(),
            HazardTypeStats {
                hazard_type: "Flood".into(),
                count: 1,
                likelihood: 0.01,
                weightage: 5.0,
            },
        );
        s
    }

    #[test]
    fn threat_is_additive() {
        let one = compute_threat(&[ev("48041", "Flood", 2017, 1.0, 2.0)], &fixed_stats()).unwrap();
        assert!((one[&("48041".into(), 2017)] - 0.1).abs() < 1e-15);
        let two = compute_threat(
            &[ev("48041", "Flood", 2017, 1.0, 2.0), ev("48041", "Flood", 2017, 1.0, 2.0)],
            &fixed_stats(),
        )
        .unwrap();
        assert!((two[&("48041".into(), 2017)] - 0.2).abs() < 1e-15);
        let halves = compute_threat(
            &[ev("48041", "Flood", 2017, 1.0, 1.0), ev("48041", "Flood", 2017, 1.0, 1.0)],
            &fixed_stats(),
        )
        .unwrap();
        assert!((halves[&("48041".into(), 2017)] - one[&("48041".into(), 2017)]).abs() < 1e-15);
    }

    #[test]
    fn unknown_hazard_type_errors() {
        let err = compute_threat(&[ev("48041", "Hail", 2017, 1.0, 2.0)], &fixed_stats()).unwrap_err();
        assert!(matches!(err, PrimeError::UnknownHazardType(t) if t == "Hail"));
    }

    #[test]
    fn damage_sums() {
        let d = compute_damage(&[ev("48041", "Flood", 2017, 10.0, 1.0), ev("48041", "Hail", 2017, 20.0, 1.0)]);
        assert_eq!(d[&("48041".into(), 2017)], 30.0);
        let z = compute_damage(&[ev("48041", "Flood", 2017, 0.0, 1.0)]);
        assert_eq!(z[&("48041".into(), 2017)], 0.0);
        assert!(compute_damage(&[]).is_empty());
    }

    #[test]
    fn recovery_rates() {
        let mut pop = PopulationPanel::default();
        pop.insert("48041".into(), 2016, 1000).unwrap();
        pop.insert("48041".into(), 2018, 1100).unwrap();
        pop.insert("48043".into(), 2016, 1000).unwrap();
        pop.insert("48043".into(), 2018, 900).unwrap();
        pop.insert("48045".into(), 2016, 500).unwrap();
        pop.insert("48045".into(), 2018, 500).unwrap();
        assert!((compute_recovery(&pop, &"48041".into(), 2017).unwrap() - 0.1).abs() < 1e-15);
        assert!((compute_recovery(&pop, &"48043".into(), 2017).unwrap() + 0.1).abs() < 1e-15);
        assert_eq!(compute_recovery(&pop, &"48045".into(), 2017).unwrap(), 0.0);
        let err = compute_recovery(&pop, &"48041".into(), 2016).unwrap_err().to_string();
        assert!(err.contains("2015") && err.contains("2017"), "{err}");
    }

    #[test]
    fn min_max_cases() {
        assert_eq!(
            min_max_normalize(&map([("a", 1.0), ("b", 2.0), ("c", 3.0)])).unwrap(),
            map([("a", 0.0), ("b", 0.5), ("c", 1.0)])
        );
        assert_eq!(
            min_max_normalize(&map([("a", 5.0), ("b", 5.0)])).unwrap(),
            map([("a", 0.0), ("b", 0.0)])
        );
        assert_eq!(
            min_max_normalize(&map([("a", -1.0), ("b", 0.0), ("c", 3.0)])).unwrap(),
            map([("a", 0.0), ("b", 0.25), ("c", 1.0)])
        );
        assert!(min_max_normalize::<&str>(&BTreeMap::new()).is_err());
    }

    #[test]
    fn single_region_scores_are_zero() {
        let k = ("48041".into(), 2017);
        let m = map([(k, 3.0)]);
        let s = compute_scores(&m, &m, &m, YearWindow::new(2017, 2017).unwrap(), ScoreOptions::default()).unwrap();
        assert_eq!((s[0].vulnerability, s[0].adaptability, s[0].resilience), (0.0, 0.0, 0.0));
    }

    #[test]
    fn extreme_two_region_scores() {
        let a: RegionYear = ("00001".into(), 2017);
        let b: RegionYear = ("00002".into(), 2017);
        let damage = map([(a.clone(), 1.0), (b.clone(), 0.0)]);
        let threat = map([(a.clone(), 0.0), (b.clone(), 1.0)]);
        let recovery = map([(a, 0.0), (b, 1.0)]);
        let s = compute_scores(&threat, &damage, &recovery, YearWindow::new(2017, 2017).unwrap(), Default::default())
            .unwrap();
        assert_eq!((s[0].vulnerability, s[0].adaptability, s[0].resilience), (1.0, -1.0, -2.0));
        assert_eq!((s[1].vulnerability, s[1].adaptability, s[1].resilience), (-1.0, 1.0, 2.0));
    }

    #[test]
    fn key_mismatch_lists_difference() {
        let a: RegionYear = ("00001".into(), 2017);
        let b: RegionYear = ("00002".into(), 2017);
        let full = map([(a.clone(), 1.0), (b, 0.0)]);
        let part = map([(a, 1.0)]);
        let err = compute_scores(&full, &full, &part, YearWindow::new(2017, 2017).unwrap(), Default::default())
            .unwrap_err();
        assert!(matches!(err, PrimeError::KeyMismatch(d) if d == vec!["00002/2017".to_string()]));
    }

    #[test]
    fn window_mode_sums_and_averages() {
        let w = YearWindow::new(2000, 2001).unwrap();
        let t = map([
            (("00001".into(), 2000), 1.0),
            (("00001".into(), 2001), 2.0),
            (("00002".into(), 2000), 0.5),
        ]);
        let r = map([
            (("00001".into(), 2000), 0.1),
            (("00001".into(), 2001), 0.3),
            (("00002".into(), 2000), 0.0),
        ]);
        let s = compute_scores(&t, &t, &r, w, ScoreOptions { aggregation: Aggregation::Window, pooled: false }).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].threat_raw, 3.0);
        assert!((s[0].recovery_raw - 0.2).abs() < 1e-15);
        assert_eq!(s[0].period.to_string(), "2000-2001");
    }

    #[test]
    fn pooled_normalization_spans_years() {
        let w = YearWindow::new(2000, 2001).unwrap();
        let t = map([
            (("00001".into(), 2000), 1.0),
            (("00002".into(), 2000), 2.0),
            (("00001".into(), 2001), 3.0),
            (("00002".into(), 2001), 5.0),
        ]);
        let per_year = compute_scores(&t, &t, &t, w, Default::default()).unwrap();
        assert_eq!(per_year.iter().map(|s| s.threat_norm).collect::<Vec<_>>(), [0.0, 1.0, 0.0, 1.0]);
        let pooled = compute_scores(&t, &t, &t, w, ScoreOptions { pooled: true, ..Default::default() }).unwrap();
        assert_eq!(pooled.iter().map(|s| s.threat_norm).collect::<Vec<_>>(), [0.0, 0.25, 0.5, 1.0]);
    }

    #[test]
    fn incomplete_population_is_excluded() {
        let mut pop = PopulationPanel::default();
        pop.insert("48041".into(), 2016, 1000).unwrap();
        pop.insert("48041".into(), 2018, 1100).unwrap();
        let events = [ev("48041", "Flood", 2017, 1.0, 1.0), ev("48043", "Flood", 2017, 1.0, 1.0)];
        let run = score_events(&events, &pop, YearWindow::new(2017, 2017).unwrap(), Default::default()).unwrap();
        assert_eq!(run.scores.len(), 1);
        assert_eq!(run.incomplete.len(), 1);
        assert_eq!(run.incomplete[0].region_code.as_str(), "48043");
    }

    /// Class of each value by counting how many quartile cut points lie strictly below it.
    fn oracle_classes(values: &[f64]) -> Vec<u8> {
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len() as f64;
        let cut = |p: f64| {
            let pos = (n - 1.0) * p;
            let (i, frac) = (pos.floor() as usize, pos.fract());
            if frac == 0.0 { s[i] } else { s[i] * (1.0 - frac) + s[i + 1] * frac }
        };
        let cuts = [cut(0.25), cut(0.5), cut(0.75)];
        values.iter().map(|v| 1 + cuts.iter().filter(|c| *v > **c).count() as u8).collect()
    }

    #[test]
    fn quartiles_of_one_to_eight() {
        let values: Vec<f64> = (1..=8).map(f64::from).collect();
        let m: BTreeMap<usize, f64> = values.iter().copied().enumerate().collect();
        let c = quantile_classify(&m, 4).unwrap();
        let got: Vec<u8> = c.classes.values().copied().collect();
        assert_eq!(got, oracle_classes(&values));
        assert_eq!(got, [1, 1, 2, 2, 3, 3, 4, 4]);
        assert!(c.warning.is_none());
    }

    #[test]
    fn degenerate_classification() {
        let same = map([("a", 2.0), ("b", 2.0), ("c", 2.0)]);
        let c = quantile_classify(&same, 4).unwrap();
        assert!(c.classes.values().all(|&k| k == 1));
        assert!(c.warning.is_some());

        let two = map([("a", 10.0), ("b", 20.0)]);
        let c = quantile_classify(&two, 4).unwrap();
        assert_eq!(c.classes.values().copied().collect::<Vec<_>>(), oracle_classes(&[10.0, 20.0]));
        assert_eq!(c.classes.values().copied().collect::<Vec<_>>(), [1, 4]);
        assert!(c.warning.is_some());
        assert!(quantile_classify::<&str>(&BTreeMap::new(), 4).is_err());
    }

    #[test]
    fn period_round_trips_text() {
        for p in [Period::Year(2017), Period::Window(2000, 2020)] {
            assert_eq!(p.to_string().parse::<Period>().unwrap(), p);
        }
    }
}

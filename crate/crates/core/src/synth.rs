//! Synthetic panel generator with known ground truth.
//!
//! Structural model, per region `i` and year `t`:
//!
//! * every indicator `j` has a standardized value
//!   `z[i,j,t] = 0.3 * b[i,j] + sqrt(0.91) * e[i,j,t]`, with `b` and `e` independent
//!   standard normals, mapped to its natural scale as `center + spread * z`;
//! * `households_with_vehicle` instead takes
//!   `0.95 * z[owner_occupied_units] + sqrt(1 - 0.95^2) * e`, so the pair
//!   correlates at about 0.95;
//! * each region-year has one to three hazard events whose per-capita damage
//!   is `duration * rate(type) * exp(DAMAGE_EFFECT * z[pct_over_65, t - 1] + 0.1 * noise)`,
//!   so an older population suffers more damage for the same exposure;
//! * annual population growth is
//!   `0.01 + GROWTH_EFFECT * z[median_rent, t - 1] + 0.002 * noise`,
//!   so recovery rises with rent.
//!
//! Resilience grows with recovery and falls with damage, so it responds
//! negatively to `pct_over_65` and positively to `median_rent`. No other
//! indicator enters the scores.

use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use geojson::{Feature, FeatureCollection, GeoJson, JsonObject};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{PrimeError, Result};
use crate::ingest::{
    write_hazard_events, write_socio, GeometrySet, HazardEvent, HazardSchema, PopulationPanel, RegionCode,
    RegionGeometry, SocioPanel, DEFAULT_INDICATORS,
};

pub const NEGATIVE_DRIVER: &str = "pct_over_65";
pub const POSITIVE_DRIVER: &str = "median_rent";
pub const COLLINEAR_KEPT: &str = "owner_occupied_units";
pub const COLLINEAR_REMOVED: &str = "households_with_vehicle";
pub const COLLINEAR_R: f64 = 0.95;
pub const DAMAGE_EFFECT: f64 = 0.5;
pub const GROWTH_EFFECT: f64 = 0.006;
/// Weight of the persistent region component in every indicator.
pub const REGION_SHARE: f64 = 0.3;

const HAZARDS: [(&str, f64); 5] = [
    ("Flooding", 0.8),
    ("Hurricane/Tropical Storm", 2.5),
    ("Severe Storm/Thunder Storm", 0.5),
    ("Wildfire", 1.2),
    ("Winter Weather", 0.3),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthOptions {
    pub regions: usize,
    pub start_year: i32,
    pub end_year: i32,
    pub seed: u64,
    /// Share of socioeconomic cells blanked to exercise interpolation.
    pub missing_fraction: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            regions: 200,
            start_year: 2000,
            end_year: 2020,
            seed: 2024,
            missing_fraction: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub events: Vec<HazardEvent>,
    pub population: PopulationPanel,
    pub socio: SocioPanel,
    pub geometry: GeometrySet,
}

/// Natural-scale center and spread of each default indicator.
fn scale(name: &str) -> (f64, f64) {
    match name {
        "pct_under_5" => (6.0, 1.0),
        "pct_over_65" => (17.0, 4.0),
        "avg_household_size" => (2.5, 0.2),
        "rural_farm_population" => (400.0, 120.0),
        "pct_female_workforce" => (46.0, 3.0),
        "pct_single_households" => (28.0, 4.0),
        "pct_no_high_school" => (13.0, 4.0),
        "median_rent" => (800.0, 150.0),
        "median_household_income" => (55000.0, 9000.0),
        "pct_below_poverty" => (15.0, 4.0),
        "pct_employed" => (58.0, 5.0),
        "owner_occupied_units" => (20000.0, 5000.0),
        "pct_renter_occupied" => (30.0, 6.0),
        "pct_mobile_homes" => (12.0, 4.0),
        "housing_density" => (150.0, 40.0),
        "households_with_vehicle" => (24000.0, 5000.0),
        "households_no_fuel" => (40.0, 10.0),
        "households_no_plumbing" => (60.0, 15.0),
        "same_house_1yr" => (86.0, 3.0),
        "hospitals" => (3.0, 0.8),
        "emergency_personnel" => (120.0, 30.0),
        _ => (0.0, 1.0),
    }
}

fn region_code(i: usize) -> RegionCode {
    let state = 1 + i / 100;
    let county = 2 * (i % 100) + 1;
    RegionCode::new(format!("{state:02}{county:03}"))
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Draws a full synthetic panel. Socioeconomic rows start one year before the
/// window and population rows extend one year either side of it.
pub fn generate(opts: &SynthOptions) -> Result<SynthData> {
    if opts.regions < 2 {
        return Err(PrimeError::invalid("regions", "need at least 2 regions"));
    }
    if opts.end_year < opts.start_year {
        return Err(PrimeError::invalid("years", "end year precedes start year"));
    }
    if !(0.0..0.5).contains(&opts.missing_fraction) {
        return Err(PrimeError::invalid("missing_fraction", "must be in [0, 0.5)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let names: Vec<String> = DEFAULT_INDICATORS.iter().map(|s| s.to_string()).collect();
    let col = |n: &str| names.iter().position(|x| x == n).expect("default indicator");
    let (j_old, j_rent, j_own, j_veh) = (col(NEGATIVE_DRIVER), col(POSITIVE_DRIVER), col(COLLINEAR_KEPT), col(COLLINEAR_REMOVED));
    let p = names.len();
    let first = opts.start_year - 1;
    let last = opts.end_year + 1;
    let socio_years = (opts.end_year - first + 1) as usize;

    let mut socio = SocioPanel::new(names.clone());
    let mut population = PopulationPanel::default();
    let mut events = Vec::new();
    let mut geometry = GeometrySet::default();
    let days = |y: i32| if NaiveDate::from_ymd_opt(y, 2, 29).is_some() { 366 } else { 365 };

    for i in 0..opts.regions {
        let code = region_code(i);
        let base: Vec<f64> = (0..p).map(|_| normal(&mut rng)).collect();
        // z[t][j] for t over the socioeconomic years.
        let mut z = vec![vec![0.0; p]; socio_years];
        for zt in z.iter_mut() {
            for j in 0..p {
                zt[j] = REGION_SHARE * base[j] + (1.0 - REGION_SHARE * REGION_SHARE).sqrt() * normal(&mut rng);
            }
            let e = normal(&mut rng);
            zt[j_veh] = COLLINEAR_R * zt[j_own] + (1.0 - COLLINEAR_R * COLLINEAR_R).sqrt() * e;
        }
        for (t, zt) in z.iter().enumerate() {
            let values = zt
                .iter()
                .enumerate()
                .map(|(j, &v)| {
                    let (c, s) = scale(&names[j]);
                    let blank = rng.random::<f64>() < opts.missing_fraction && t > 0 && t + 1 < socio_years;
                    if blank {
                        f64::NAN
                    } else {
                        c + s * v
                    }
                })
                .collect();
            socio.insert(code.clone(), first + t as i32, values)?;
        }

        // Population: growth into year t + 1 follows rent observed in t.
        let mut pop = (10f64).powf(4.0 + 1.5 * rng.random::<f64>());
        population.insert(code.clone(), first, pop.round() as u64)?;
        for y in first + 1..=last {
            let zt = &z[((y - 1 - first) as usize).min(socio_years - 1)];
            let growth = 0.01 + GROWTH_EFFECT * zt[j_rent] + 0.002 * normal(&mut rng);
            pop *= 1.0 + growth;
            population.insert(code.clone(), y, pop.round() as u64)?;
        }

        for y in opts.start_year..=opts.end_year {
            let zlag = &z[(y - 1 - first) as usize];
            let n_events = rng.random_range(1..=3);
            for _ in 0..n_events {
                let (kind, rate) = HAZARDS[rng.random_range(0..HAZARDS.len())];
                let duration = rng.random_range(1..=10) as f64;
                let factor = (DAMAGE_EFFECT * zlag[j_old] + 0.1 * normal(&mut rng)).exp();
                let doy = rng.random_range(0..days(y));
                let date = NaiveDate::from_ymd_opt(y, 1, 1).expect("valid year") + chrono::Days::new(doy as u64);
                events.push(HazardEvent {
                    region_code: code.clone(),
                    hazard_type: kind.to_string(),
                    year: y,
                    damage_per_capita: (duration * rate * factor * 1e6).round() / 1e6,
                    duration_days: duration,
                    date: Some(date),
                });
            }
        }

        let (gx, gy) = ((i % 20) as f64 * 0.5 - 100.0, (i / 20) as f64 * 0.5 + 30.0);
        let ring = vec![vec![gx, gy], vec![gx + 0.5, gy], vec![gx + 0.5, gy + 0.5], vec![gx, gy + 0.5], vec![gx, gy]];
        geometry.regions.insert(
            code.clone(),
            RegionGeometry {
                region_code: code.clone(),
                name: format!("Synthetic County {}", i + 1),
                geometry: geojson::Geometry::new(geojson::Value::Polygon(vec![ring])),
            },
        );
    }
    Ok(SynthData {
        events,
        population,
        socio,
        geometry,
    })
}

pub fn population_csv(panel: &PopulationPanel) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["UniqueCode", "Year", "Population"])?;
    for (code, year, pop) in panel.iter() {
        w.write_record([code.to_string(), year.to_string(), pop.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| PrimeError::Data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn geometry_geojson(set: &GeometrySet) -> Result<String> {
    let features = set
        .regions
        .values()
        .map(|g| {
            let mut props = JsonObject::new();
            props.insert("UniqueCode".into(), json!(g.region_code));
            props.insert("name".into(), json!(g.name));
            Feature {
                bbox: None,
                geometry: Some(g.geometry.clone()),
                id: None,
                properties: Some(props),
                foreign_members: None,
            }
        })
        .collect();
    let gj = GeoJson::FeatureCollection(FeatureCollection {
        bbox: None,
        features,
        foreign_members: None,
    });
    Ok(serde_json::to_string(&gj)? + "\n")
}

/// File names used for the four inputs inside a data directory.
pub const HAZARDS_FILE: &str = "hazards.csv";
pub const POPULATION_FILE: &str = "population.csv";
pub const SOCIO_FILE: &str = "socio.csv";
pub const GEOMETRY_FILE: &str = "counties.geojson";

/// Writes the four input files into `dir`.
pub fn write_fixtures(data: &SynthData, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| PrimeError::io(dir, e))?;
    let mut hazards = Vec::new();
    write_hazard_events(&mut hazards, &data.events, &HazardSchema::default())?;
    let mut socio = Vec::new();
    write_socio(&mut socio, &data.socio)?;
    let files: [(&str, Vec<u8>); 4] = [
        (HAZARDS_FILE, hazards),
        (POPULATION_FILE, population_csv(&data.population)?.into_bytes()),
        (SOCIO_FILE, socio),
        (GEOMETRY_FILE, geometry_geojson(&data.geometry)?.into_bytes()),
    ];
    for (name, bytes) in files {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| PrimeError::io(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::pearson;

    fn small() -> SynthOptions {
        SynthOptions {
            regions: 30,
            start_year: 2010,
            end_year: 2014,
            seed: 3,
            missing_fraction: 0.0,
        }
    }

    #[test]
    fn panel_shapes() {
        let d = generate(&small()).unwrap();
        assert_eq!(d.socio.len(), 30 * 6);
        assert_eq!(d.population.len(), 30 * 7);
        assert_eq!(d.geometry.len(), 30);
        assert!(d.events.iter().all(|e| (2010..=2014).contains(&e.year)));
        assert_eq!(region_code(0).as_str(), "01001");
        assert_eq!(region_code(150).as_str(), "02101");
    }

    #[test]
    fn planted_pair_correlates() {
        let d = generate(&SynthOptions { regions: 200, ..small() }).unwrap();
        let j_own = d.socio.indicators().iter().position(|n| n == COLLINEAR_KEPT).unwrap();
        let j_veh = d.socio.indicators().iter().position(|n| n == COLLINEAR_REMOVED).unwrap();
        let (a, b): (Vec<f64>, Vec<f64>) = d.socio.iter().map(|(_, _, v)| (v[j_own], v[j_veh])).unzip();
        let r = pearson(&a, &b).unwrap();
        assert!((r - 0.95).abs() < 0.01, "{r}");
    }

    #[test]
    fn same_seed_same_panel() {
        assert_eq!(generate(&small()).unwrap(), generate(&small()).unwrap());
    }
}

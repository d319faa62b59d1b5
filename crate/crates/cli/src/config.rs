//! Config ingestion: TOML with one section per concern, strict unknown-key
//! rejection with a nearest-name suggestion, `--set section.key=value`
//! overrides, and full default materialization so the manifest can embed a
//! re-runnable config.
//!
//! Keys carry their unit in the name (`w_um`, `t_c`, `b_perp_ut`); values
//! are converted to SI exactly once, on the way into the core types.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thincell_core::{
    derive_thermal, AtomSpecies, CellGeometry, FieldConfig, Strategy, ThermalEnsemble,
};

use crate::CliError;

/// Section and key names accepted in a config file. The walker checks the
/// raw TOML tree against this before typed deserialization so an unknown
/// key can be reported with its nearest valid name.
const SCHEMA: &[(&str, &[&str])] = &[
    ("species", &["name"]),
    ("cell", &["w_um", "d_mm", "w_pu_mm", "r_pr_mm"]),
    ("thermal", &["t_c", "n_cm3"]),
    ("fields", &["b_par_ut", "b_perp_ut", "gamma_coh_per_s", "c1_rad_s", "c2"]),
    ("lineshape", &["b_max_ut", "points", "strategy"]),
    ("scan_fwhm", &["d_mm_list", "points", "strategy"]),
    ("distributions", &["v_max_m_per_s", "v_points", "alpha_points"]),
    (
        "obe",
        &[
            "omega_pump_mhz",
            "omega_probe_mhz",
            "detuning_mhz",
            "pump_us",
            "dark_us",
            "probe_us",
            "kappa",
            "rel_tol",
        ],
    ),
    ("montecarlo", &["n_samples", "seed", "batch_size", "b_max_ut", "points"]),
    (
        "fit",
        &[
            "pump_on",
            "pump_off",
            "initial_c1",
            "initial_c2",
            "initial_gamma_per_s",
            "fit_offset",
            "strategy",
        ],
    ),
];

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    species: Option<RawSpecies>,
    cell: Option<RawCell>,
    thermal: Option<RawThermal>,
    fields: Option<RawFields>,
    lineshape: Option<RawLineshape>,
    scan_fwhm: Option<RawScanFwhm>,
    distributions: Option<RawDistributions>,
    obe: Option<RawObe>,
    montecarlo: Option<RawMontecarlo>,
    fit: Option<RawFit>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpecies {
    name: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCell {
    w_um: Option<f64>,
    d_mm: Option<f64>,
    w_pu_mm: Option<f64>,
    r_pr_mm: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawThermal {
    t_c: Option<f64>,
    n_cm3: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFields {
    b_par_ut: Option<f64>,
    b_perp_ut: Option<f64>,
    gamma_coh_per_s: Option<f64>,
    c1_rad_s: Option<f64>,
    c2: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLineshape {
    b_max_ut: Option<f64>,
    points: Option<usize>,
    strategy: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScanFwhm {
    d_mm_list: Option<Vec<f64>>,
    points: Option<usize>,
    strategy: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDistributions {
    v_max_m_per_s: Option<f64>,
    v_points: Option<usize>,
    alpha_points: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObe {
    omega_pump_mhz: Option<f64>,
    omega_probe_mhz: Option<f64>,
    detuning_mhz: Option<f64>,
    pump_us: Option<f64>,
    dark_us: Option<f64>,
    probe_us: Option<f64>,
    kappa: Option<f64>,
    rel_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMontecarlo {
    n_samples: Option<u64>,
    seed: Option<u64>,
    batch_size: Option<u64>,
    b_max_ut: Option<f64>,
    points: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFit {
    pump_on: Option<String>,
    pump_off: Option<String>,
    initial_c1: Option<f64>,
    initial_c2: Option<f64>,
    initial_gamma_per_s: Option<f64>,
    fit_offset: Option<bool>,
    strategy: Option<String>,
}

/// Fully materialized configuration in the file's own units. Serializing
/// this back to TOML yields a config that reproduces the run.
#[derive(Debug, Clone, Serialize)]
pub struct FullConfig {
    pub species: SpeciesSection,
    pub cell: CellSection,
    pub thermal: ThermalSection,
    pub fields: FieldsSection,
    pub lineshape: LineshapeSection,
    pub scan_fwhm: ScanFwhmSection,
    pub distributions: DistributionsSection,
    pub obe: ObeSection,
    pub montecarlo: MontecarloSection,
    pub fit: FitSection,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpeciesSection {
    pub name: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellSection {
    pub w_um: f64,
    pub d_mm: f64,
    pub w_pu_mm: f64,
    pub r_pr_mm: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThermalSection {
    pub t_c: f64,
    pub n_cm3: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FieldsSection {
    pub b_par_ut: f64,
    pub b_perp_ut: f64,
    pub gamma_coh_per_s: f64,
    pub c1_rad_s: f64,
    pub c2: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LineshapeSection {
    pub b_max_ut: f64,
    pub points: usize,
    pub strategy: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanFwhmSection {
    pub d_mm_list: Vec<f64>,
    pub points: usize,
    pub strategy: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct DistributionsSection {
    pub v_max_m_per_s: f64,
    pub v_points: usize,
    pub alpha_points: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ObeSection {
    pub omega_pump_mhz: f64,
    pub omega_probe_mhz: f64,
    pub detuning_mhz: f64,
    /// Dwell and flight times; zero means "derive from geometry and the
    /// most probable speed".
    pub pump_us: f64,
    pub dark_us: f64,
    pub probe_us: f64,
    pub kappa: f64,
    pub rel_tol: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MontecarloSection {
    pub n_samples: u64,
    pub seed: u64,
    pub batch_size: u64,
    pub b_max_ut: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitSection {
    pub pump_on: String,
    pub pump_off: String,
    pub initial_c1: f64,
    pub initial_c2: f64,
    pub initial_gamma_per_s: f64,
    pub fit_offset: bool,
    pub strategy: String,
}

/// Core-level inputs shared by every subcommand.
pub struct CoreInputs {
    pub species: AtomSpecies,
    pub geometry: CellGeometry,
    pub ensemble: ThermalEnsemble,
    pub fields: FieldConfig,
}

fn nearest<'a>(needle: &str, candidates: impl Iterator<Item = &'a str>) -> Option<&'a str> {
    candidates.min_by_key(|c| strsim::levenshtein(needle, c))
}

/// Rejects any key not in the schema, naming the closest valid key.
fn check_unknown_keys(root: &toml::Value) -> Result<(), CliError> {
    let table = root
        .as_table()
        .ok_or_else(|| CliError::Config("config root must be a table of sections".into()))?;
    for (section, value) in table {
        let Some((_, keys)) = SCHEMA.iter().find(|(s, _)| s == section) else {
            let hint = nearest(section, SCHEMA.iter().map(|(s, _)| *s)).unwrap();
            return Err(CliError::Config(format!(
                "unknown section `{section}`; nearest valid name is `{hint}`"
            )));
        };
        let inner = value.as_table().ok_or_else(|| {
            CliError::Config(format!("`{section}` must be a section (a TOML table)"))
        })?;
        for key in inner.keys() {
            if !keys.contains(&key.as_str()) {
                // prefer a suggestion from the same section, fall back to
                // any section whose key is closer
                let local = nearest(key, keys.iter().copied()).unwrap();
                let (global_sec, global_key) = SCHEMA
                    .iter()
                    .flat_map(|(s, ks)| ks.iter().map(move |k| (*s, *k)))
                    .min_by_key(|(_, k)| strsim::levenshtein(key, k))
                    .unwrap();
                let hint = if strsim::levenshtein(key, global_key)
                    < strsim::levenshtein(key, local)
                {
                    format!("{global_sec}.{global_key}")
                } else {
                    format!("{section}.{local}")
                };
                return Err(CliError::Config(format!(
                    "unknown key `{section}.{key}`; nearest valid name is `{hint}`"
                )));
            }
        }
    }
    Ok(())
}

/// Applies one `section.key=value` override onto the raw TOML tree. Values
/// parse as TOML (so `3.5`, `true`, `[1, 2]`, `"text"` all work); anything
/// unparseable is taken as a bare string.
fn apply_override(root: &mut toml::Value, spec: &str) -> Result<(), CliError> {
    let (path, raw_value) = spec.split_once('=').ok_or_else(|| {
        CliError::Config(format!("override `{spec}` must look like section.key=value"))
    })?;
    let (section, key) = path.trim().split_once('.').ok_or_else(|| {
        CliError::Config(format!("override path `{path}` must look like section.key"))
    })?;
    let value: toml::Value = match format!("v = {}", raw_value.trim()).parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw_value.trim().to_string()),
    };
    let table = root.as_table_mut().unwrap();
    table
        .entry(section.trim().to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()))
        .as_table_mut()
        .ok_or_else(|| CliError::Config(format!("`{section}` is not a section")))?
        .insert(key.trim().to_string(), value);
    Ok(())
}

fn require<T>(value: Option<T>, key: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Config(format!("missing required key `{key}`")))
}

/// Loads, overrides, validates, and materializes a config file.
pub fn load(path: &Path, overrides: &[String]) -> Result<FullConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut root: toml::Value = text
        .parse()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    for spec in overrides {
        apply_override(&mut root, spec)?;
    }
    check_unknown_keys(&root)?;
    let raw: RawConfig = root
        .try_into()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    resolve(raw)
}

fn resolve(raw: RawConfig) -> Result<FullConfig, CliError> {
    let cell_raw = raw.cell.unwrap_or_default();
    let cell = CellSection {
        w_um: require(cell_raw.w_um, "cell.w_um")?,
        d_mm: require(cell_raw.d_mm, "cell.d_mm")?,
        w_pu_mm: cell_raw.w_pu_mm.unwrap_or(0.5),
        r_pr_mm: cell_raw.r_pr_mm.unwrap_or(0.5),
    };
    let thermal_raw = raw.thermal.unwrap_or_default();
    let obe_raw = raw.obe.unwrap_or_default();
    let mc_raw = raw.montecarlo.unwrap_or_default();
    let ls_raw = raw.lineshape.unwrap_or_default();
    let scan_raw = raw.scan_fwhm.unwrap_or_default();
    let dist_raw = raw.distributions.unwrap_or_default();
    let fit_raw = raw.fit.unwrap_or_default();

    let config = FullConfig {
        species: SpeciesSection {
            name: raw.species.unwrap_or_default().name.unwrap_or_else(|| "rb87".into()),
        },
        cell,
        thermal: ThermalSection {
            t_c: thermal_raw.t_c.unwrap_or(120.0),
            n_cm3: thermal_raw.n_cm3.unwrap_or(2.0e13),
        },
        fields: {
            let f = raw.fields.unwrap_or_default();
            FieldsSection {
                b_par_ut: f.b_par_ut.unwrap_or(0.0),
                b_perp_ut: f.b_perp_ut.unwrap_or(20.0),
                gamma_coh_per_s: f.gamma_coh_per_s.unwrap_or(1.7e4),
                c1_rad_s: f.c1_rad_s.unwrap_or(0.0),
                c2: f.c2.unwrap_or(1.0),
            }
        },
        lineshape: LineshapeSection {
            b_max_ut: ls_raw.b_max_ut.unwrap_or(60.0),
            points: ls_raw.points.unwrap_or(241),
            strategy: ls_raw.strategy.unwrap_or_else(|| "speed-average".into()),
        },
        scan_fwhm: ScanFwhmSection {
            d_mm_list: scan_raw
                .d_mm_list
                .unwrap_or_else(|| (1..=8).map(f64::from).collect()),
            points: scan_raw.points.unwrap_or(241),
            strategy: scan_raw.strategy.unwrap_or_else(|| "speed-average".into()),
        },
        distributions: DistributionsSection {
            v_max_m_per_s: dist_raw.v_max_m_per_s.unwrap_or(10.0),
            v_points: dist_raw.v_points.unwrap_or(201),
            alpha_points: dist_raw.alpha_points.unwrap_or(201),
        },
        obe: ObeSection {
            omega_pump_mhz: obe_raw.omega_pump_mhz.unwrap_or(50.0),
            omega_probe_mhz: obe_raw.omega_probe_mhz.unwrap_or(2.0),
            detuning_mhz: obe_raw.detuning_mhz.unwrap_or(0.0),
            pump_us: obe_raw.pump_us.unwrap_or(0.0),
            dark_us: obe_raw.dark_us.unwrap_or(0.0),
            probe_us: obe_raw.probe_us.unwrap_or(0.0),
            kappa: obe_raw.kappa.unwrap_or(1.0),
            rel_tol: obe_raw.rel_tol.unwrap_or(thincell_core::obe::DEFAULT_REL_TOL),
        },
        montecarlo: MontecarloSection {
            n_samples: mc_raw.n_samples.unwrap_or(10_000_000),
            seed: mc_raw.seed.unwrap_or(1),
            batch_size: mc_raw.batch_size.unwrap_or(65_536),
            b_max_ut: mc_raw.b_max_ut.unwrap_or(60.0),
            points: mc_raw.points.unwrap_or(41),
        },
        fit: FitSection {
            pump_on: fit_raw.pump_on.unwrap_or_default(),
            pump_off: fit_raw.pump_off.unwrap_or_default(),
            initial_c1: fit_raw.initial_c1.unwrap_or(0.0),
            initial_c2: fit_raw.initial_c2.unwrap_or(0.5),
            initial_gamma_per_s: fit_raw.initial_gamma_per_s.unwrap_or(5.0e3),
            fit_offset: fit_raw.fit_offset.unwrap_or(false),
            strategy: fit_raw.strategy.unwrap_or_else(|| "speed-average".into()),
        },
    };
    Ok(config)
}

pub fn parse_strategy(name: &str) -> Result<Strategy, CliError> {
    match name {
        "speed-average" => Ok(Strategy::SpeedAverage),
        "joint-2d" => Ok(Strategy::Joint2d),
        other => Err(CliError::Config(format!(
            "unknown strategy `{other}`; valid values are `speed-average` and `joint-2d`"
        ))),
    }
}

impl FullConfig {
    /// SI-converted core inputs. Constructor validation (positive sizes,
    /// separation > probe radius, ...) happens here.
    pub fn core_inputs(&self) -> Result<CoreInputs, CliError> {
        let species = match self.species.name.to_ascii_lowercase().as_str() {
            "rb87" | "87rb" => AtomSpecies::rubidium87(),
            other => {
                return Err(CliError::Config(format!(
                    "unknown species `{other}`; only `rb87` is built in"
                )))
            }
        };
        let geometry = CellGeometry::new(
            self.cell.w_um * 1e-6,
            self.cell.d_mm * 1e-3 / 2.0,
            self.cell.w_pu_mm * 1e-3,
            self.cell.r_pr_mm * 1e-3,
        )?;
        let ensemble =
            derive_thermal(self.thermal.t_c + 273.15, self.thermal.n_cm3 * 1e6, &species)?;
        let fields = FieldConfig {
            b_parallel: self.fields.b_par_ut * 1e-6,
            b_perp: self.fields.b_perp_ut * 1e-6,
            gamma_coh: self.fields.gamma_coh_per_s,
            c1: self.fields.c1_rad_s,
            c2: self.fields.c2,
        };
        Ok(CoreInputs { species, geometry, ensemble, fields })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config sections serialize")
    }
}

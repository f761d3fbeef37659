//! TOML run configuration. Frequencies are given as `f/2pi` in kHz and
//! times in us; [`load_config`] converts to rad/us.

use crate::CliError;
use exfree_core::experiments::{device_budget_items, BudgetItem, QubitExcitation};
use exfree_core::model::{angular_to_khz, device_cavity_coherence};
use exfree_core::{
    khz_to_angular, CodeLabel, Method, ModeCoherence, ModeDims, Purification, RegimeFlag,
    SystemParams,
};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Qst,
    PurifiedQst,
    Hom,
    Binomial,
    CalibrateG,
    CalibrateDelta0,
    Budget,
    CompareBs,
    Sweep,
}

impl Experiment {
    pub const ALL: [Experiment; 9] = [
        Experiment::Qst,
        Experiment::PurifiedQst,
        Experiment::Hom,
        Experiment::Binomial,
        Experiment::CalibrateG,
        Experiment::CalibrateDelta0,
        Experiment::Budget,
        Experiment::CompareBs,
        Experiment::Sweep,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::Qst => "qst",
            Experiment::PurifiedQst => "purified-qst",
            Experiment::Hom => "hom",
            Experiment::Binomial => "binomial",
            Experiment::CalibrateG => "calibrate-g",
            Experiment::CalibrateDelta0 => "calibrate-delta0",
            Experiment::Budget => "budget",
            Experiment::CompareBs => "compare-bs",
            Experiment::Sweep => "sweep",
        }
    }

    /// Experiments that evolve the chain and so need `delta > 2 sqrt2 g`.
    pub fn needs_oscillatory(self) -> bool {
        matches!(
            self,
            Experiment::Qst
                | Experiment::PurifiedQst
                | Experiment::Hom
                | Experiment::Binomial
                | Experiment::Budget
        )
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Experiment {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.as_str() == s.trim())
            .ok_or_else(|| {
                let names: Vec<&str> = Experiment::ALL.iter().map(|e| e.as_str()).collect();
                CliError::Config(format!(
                    "field `experiment`: unknown experiment {s:?}; expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

/// The file as written. Serializing it back gives an equivalent file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g_over_2pi_khz: Option<f64>,
    /// S3-S2 coupling when it differs from `g_over_2pi_khz`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g2_over_2pi_khz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_over_2pi_khz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dims: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration_us: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trotter_dt_us: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rtol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coherence: Option<CoherenceSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub purification: Option<PurificationSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub binomial: Option<BinomialSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<BudgetSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compare_bs: Option<CompareSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoherenceSection {
    /// Use the measured device cavity coherence.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub device: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub modes: Vec<ModeSection>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t1_us: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tphi_us: Option<f64>,
    #[serde(default)]
    pub n_th: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PurificationSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qubit_excitation_rate_per_us: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinomialSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub code: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub inject_loss: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wigner_extent: Option<f64>,
    /// Points per axis; 0 skips the Wigner maps.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wigner_points: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSection {
    /// CSV of measured points; synthetic data are generated when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_csv: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max_us: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_d_khz: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta0_truth_khz: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSection {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub items: Vec<BudgetEntry>,
}

/// A fixed row gives `infidelity`; a simulated row sets `simulated = true`
/// and takes its coherence from the `[coherence]` section.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetEntry {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub infidelity: Option<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub simulated: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    pub delta_grid_khz: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub experiment: String,
    pub delta_over_2pi_khz: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BinomialSettings {
    pub code: CodeLabel,
    pub inject_loss: bool,
    pub wigner_grid: Option<(f64, usize)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationSettings {
    pub data_csv: Option<PathBuf>,
    pub points: usize,
    /// us; `None` means `2/g`.
    pub t_max: Option<f64>,
    pub noise: Option<(f64, u64)>,
    /// rad/us
    pub delta_d: Vec<f64>,
    pub delta0_truth: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSettings {
    pub experiment: Experiment,
    /// rad/us
    pub deltas: Vec<f64>,
}

/// Validated configuration in rad/us and us.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub label: String,
    pub params: SystemParams,
    pub method: Method,
    pub out_dir: PathBuf,
    /// us; `None` picks a default from the swap time.
    pub duration: Option<f64>,
    pub samples: usize,
    pub trotter_dt: Option<f64>,
    pub rtol: f64,
    pub regime: RegimeFlag,
    pub warnings: Vec<String>,
    pub purification: Purification,
    pub excitation: QubitExcitation,
    pub binomial: BinomialSettings,
    pub calibration: CalibrationSettings,
    pub budget: Vec<BudgetItem>,
    /// rad/us
    pub compare_grid: Vec<f64>,
    pub sweep: Option<SweepSettings>,
    pub source: RawConfig,
}

/// Command-line overrides applied on top of the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub experiment: Option<Experiment>,
    pub out_dir: Option<PathBuf>,
    pub method: Option<Method>,
    pub dims: Option<Vec<usize>>,
}

fn field_err(field: &str, msg: impl fmt::Display) -> CliError {
    CliError::Config(format!("field `{field}`: {msg}"))
}

fn missing(field: &str) -> CliError {
    CliError::Config(format!("missing field `{field}`"))
}

fn positive(field: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(field_err(field, format!("must be positive, got {v}")))
    }
}

fn format_khz(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    format!("{s}kHz")
}

pub fn parse_config(text: &str) -> Result<RawConfig, CliError> {
    toml::from_str(text)
        .map_err(|e| CliError::Config(e.message().to_string() + &span_hint(text, e.span())))
}

fn span_hint(text: &str, span: Option<std::ops::Range<usize>>) -> String {
    match span {
        Some(r) => {
            let line = text[..r.start.min(text.len())].matches('\n').count() + 1;
            format!(" (line {line})")
        }
        None => String::new(),
    }
}

/// Reads and validates a config file. The file must name its experiment.
pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    load_config_with(path, &Overrides::default())
}

/// Like [`load_config`], with command-line values taking precedence. An
/// experiment given on the command line must agree with the file's, if
/// the file names one.
pub fn load_config_with(path: &Path, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let raw = parse_config(&text)?;
    resolve(raw, overrides)
}

pub fn resolve(raw: RawConfig, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let from_file = raw
        .experiment
        .as_deref()
        .map(Experiment::from_str)
        .transpose()?;
    let experiment = match (from_file, overrides.experiment) {
        (Some(f), Some(c)) if f != c => {
            return Err(field_err(
                "experiment",
                format!("file says {f} but {c} was requested"),
            ))
        }
        (Some(f), _) => f,
        (None, Some(c)) => c,
        (None, None) => return Err(missing("experiment")),
    };
    let mut warnings = Vec::new();

    let g1 = positive(
        "g_over_2pi_khz",
        raw.g_over_2pi_khz
            .ok_or_else(|| missing("g_over_2pi_khz"))?,
    )?;
    let g2 = match raw.g2_over_2pi_khz {
        Some(v) => positive("g2_over_2pi_khz", v)?,
        None => g1,
    };
    let sweep = match (&raw.sweep, experiment) {
        (Some(s), Experiment::Sweep) => {
            let inner = Experiment::from_str(&s.experiment).map_err(|_| {
                field_err(
                    "sweep.experiment",
                    format!("unknown experiment {:?}", s.experiment),
                )
            })?;
            if !inner.needs_oscillatory() {
                return Err(field_err(
                    "sweep.experiment",
                    format!("{inner} does not depend on the detuning"),
                ));
            }
            if s.delta_over_2pi_khz.is_empty() {
                return Err(field_err("sweep.delta_over_2pi_khz", "must not be empty"));
            }
            let mut deltas = Vec::new();
            for &d in &s.delta_over_2pi_khz {
                deltas.push(khz_to_angular(positive("sweep.delta_over_2pi_khz", d)?));
            }
            Some(SweepSettings {
                experiment: inner,
                deltas,
            })
        }
        (None, Experiment::Sweep) => return Err(missing("sweep")),
        (Some(_), _) => {
            warnings.push("`[sweep]` is ignored unless the experiment is sweep".into());
            None
        }
        (None, _) => None,
    };
    let needs_delta = experiment.needs_oscillatory();
    let delta_khz = match raw.delta_over_2pi_khz {
        Some(d) => positive("delta_over_2pi_khz", d)?,
        None if needs_delta => return Err(missing("delta_over_2pi_khz")),
        None => match &sweep {
            Some(s) => angular_to_khz(s.deltas[0]),
            None => 10.0 * g1.max(g2),
        },
    };

    let dims = overrides.dims.clone().or_else(|| raw.dims.clone());
    let dims = match dims {
        Some(d) => {
            if d.len() != 3 {
                return Err(field_err(
                    "dims",
                    format!("expected three levels, got {}", d.len()),
                ));
            }
            ModeDims::new(d).map_err(|e| field_err("dims", e))?
        }
        None => ModeDims::three_mode_default(),
    };

    let method = match (overrides.method, &raw.method) {
        (Some(m), _) => m,
        (None, Some(s)) => Method::from_str(s).map_err(|e| field_err("method", e))?,
        (None, None) => Method::Exact,
    };

    let coherence = match &raw.coherence {
        None => Vec::new(),
        Some(c) if c.device && !c.modes.is_empty() => {
            return Err(field_err(
                "coherence",
                "give either `device = true` or `modes`, not both",
            ))
        }
        Some(c) if c.device => device_cavity_coherence().to_vec(),
        Some(c) => {
            if c.modes.len() > 3 {
                return Err(field_err(
                    "coherence.modes",
                    format!("at most three modes, got {}", c.modes.len()),
                ));
            }
            c.modes
                .iter()
                .map(|m| ModeCoherence {
                    t1: m.t1_us,
                    tphi: m.tphi_us,
                    n_th: m.n_th,
                })
                .collect()
        }
    };
    if method == Method::Lindblad && coherence.is_empty() {
        warnings
            .push("lindblad method without a [coherence] section evolves a closed chain".into());
    }
    if method != Method::Lindblad && !coherence.is_empty() && experiment != Experiment::Budget {
        warnings.push(format!("[coherence] is ignored by the {method} method"));
    }

    let params = SystemParams::new(
        khz_to_angular(g1),
        khz_to_angular(g2),
        khz_to_angular(delta_khz),
        dims,
    )
    .and_then(|p| p.with_coherence(coherence))
    .map_err(|e| CliError::Config(e.to_string()))?;

    let regime = params.regime();
    if experiment.needs_oscillatory() && !regime.oscillatory {
        warnings.push(format!(
            "delta/2pi = {delta_khz} kHz is below the oscillation threshold 2*sqrt(2)*g/2pi = {:.1} kHz",
            angular_to_khz(regime.threshold)
        ));
    }
    if let Some(s) = &sweep {
        let threshold = regime.threshold;
        for &d in &s.deltas {
            if d <= threshold {
                warnings.push(format!(
                    "sweep detuning {:.1} kHz is below the oscillation threshold {:.1} kHz",
                    angular_to_khz(d),
                    angular_to_khz(threshold)
                ));
            }
        }
    }

    let duration = raw
        .duration_us
        .map(|d| positive("duration_us", d))
        .transpose()?;
    let samples = raw.samples.unwrap_or(201);
    if samples < 2 {
        return Err(field_err(
            "samples",
            format!("need at least 2, got {samples}"),
        ));
    }
    let trotter_dt = raw
        .trotter_dt_us
        .map(|d| positive("trotter_dt_us", d))
        .transpose()?;
    let rtol = positive(
        "rtol",
        raw.rtol.unwrap_or(exfree_core::dynamics::DEFAULT_RTOL),
    )?;

    let pur = raw.purification.clone().unwrap_or_default();
    let purification = match &pur.mode {
        Some(m) => Purification::from_str(m).map_err(|e| field_err("purification.mode", e))?,
        None => Purification::QubitCavity,
    };
    let excitation = match pur.qubit_excitation_rate_per_us {
        Some(r) if r >= 0.0 && r.is_finite() => QubitExcitation { rate: r },
        Some(r) => {
            return Err(field_err(
                "purification.qubit_excitation_rate_per_us",
                format!("must be nonnegative, got {r}"),
            ))
        }
        None => QubitExcitation::default(),
    };

    let b = raw.binomial.clone().unwrap_or_default();
    let code = match &b.code {
        Some(c) => CodeLabel::from_str(c).map_err(|e| field_err("binomial.code", e))?,
        None => CodeLabel::ZeroL,
    };
    if !code.is_logical() {
        return Err(field_err(
            "binomial.code",
            format!("{code} is not a logical state"),
        ));
    }
    let wigner_points = b.wigner_points.unwrap_or(41);
    let wigner_grid = if wigner_points == 0 {
        None
    } else {
        Some((
            positive("binomial.wigner_extent", b.wigner_extent.unwrap_or(3.0))?,
            wigner_points,
        ))
    };

    let c = raw.calibration.clone().unwrap_or_default();
    let noise = match (c.noise_sigma, c.seed) {
        (Some(s), seed) if s > 0.0 => Some((s, seed.unwrap_or(0))),
        (Some(s), _) if s < 0.0 || !s.is_finite() => {
            return Err(field_err(
                "calibration.noise_sigma",
                format!("must be nonnegative, got {s}"),
            ))
        }
        _ => None,
    };
    let calibration = CalibrationSettings {
        data_csv: c.data_csv.clone(),
        points: c.points.unwrap_or(101),
        t_max: c
            .t_max_us
            .map(|t| positive("calibration.t_max_us", t))
            .transpose()?,
        noise,
        delta_d: c
            .delta_d_khz
            .clone()
            .unwrap_or_else(|| vec![0.0, 25.0, 50.0, 100.0, 150.0, 200.0])
            .into_iter()
            .map(khz_to_angular)
            .collect(),
        delta0_truth: khz_to_angular(positive(
            "calibration.delta0_truth_khz",
            c.delta0_truth_khz.unwrap_or(275.0),
        )?),
    };

    let budget = match &raw.budget {
        Some(s) if !s.items.is_empty() => {
            let mut items = Vec::new();
            for (i, e) in s.items.iter().enumerate() {
                let field = format!("budget.items[{i}]");
                match (e.simulated, e.infidelity) {
                    (true, None) => {
                        if params.coherence.is_empty() {
                            return Err(field_err(
                                &field,
                                "simulated rows need a [coherence] section",
                            ));
                        }
                        items.push(BudgetItem::Simulated {
                            name: e.name.clone(),
                            coherence: params.coherence.clone(),
                        })
                    }
                    (false, Some(v)) if (0.0..=1.0).contains(&v) => items.push(BudgetItem::Fixed {
                        name: e.name.clone(),
                        infidelity: v,
                    }),
                    (false, Some(v)) => {
                        return Err(field_err(
                            &format!("{field}.infidelity"),
                            format!("must lie in [0, 1], got {v}"),
                        ))
                    }
                    (true, Some(_)) => {
                        return Err(field_err(
                            &field,
                            "give either `infidelity` or `simulated = true`",
                        ))
                    }
                    (false, None) => return Err(missing(&format!("{field}.infidelity"))),
                }
            }
            items
        }
        _ => device_budget_items(),
    };

    let compare_grid = match &raw.compare_bs {
        Some(s) => {
            if s.delta_grid_khz.is_empty() {
                return Err(field_err("compare_bs.delta_grid_khz", "must not be empty"));
            }
            let mut v = Vec::new();
            for &d in &s.delta_grid_khz {
                if d.is_nan() || d < 0.0 {
                    return Err(field_err(
                        "compare_bs.delta_grid_khz",
                        format!("must be nonnegative, got {d}"),
                    ));
                }
                v.push(khz_to_angular(d));
            }
            v
        }
        None => [250.0, 300.0, 373.0, 463.0, 475.0, 675.0, 775.0, 1000.0]
            .into_iter()
            .map(khz_to_angular)
            .collect(),
    };

    let label = match &raw.label {
        Some(l) => {
            if l.is_empty() || l.contains(['/', '\\']) || l.starts_with('.') {
                return Err(field_err(
                    "label",
                    format!("{l:?} is not a usable directory name"),
                ));
            }
            l.clone()
        }
        None if experiment.needs_oscillatory() => format!("delta-{}", format_khz(delta_khz)),
        None => "default".into(),
    };

    Ok(RunConfig {
        experiment,
        label,
        method,
        out_dir: overrides
            .out_dir
            .clone()
            .or_else(|| raw.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("out")),
        duration,
        samples,
        trotter_dt,
        rtol,
        regime,
        warnings,
        purification,
        excitation,
        binomial: BinomialSettings {
            code,
            inject_loss: b.inject_loss,
            wigner_grid,
        },
        calibration,
        budget,
        compare_grid,
        sweep,
        params,
        source: raw,
    })
}

impl RunConfig {
    /// Copy of this config for one sweep point.
    pub fn at_delta(&self, experiment: Experiment, delta: f64) -> RunConfig {
        let mut c = self.clone();
        c.experiment = experiment;
        c.params = self.params.with_delta(delta);
        c.regime = c.params.regime();
        let point = format!("delta-{}", format_khz(angular_to_khz(delta)));
        c.label = if self.label == "default" {
            point
        } else {
            format!("{}-{point}", self.label)
        };
        c.sweep = None;
        c
    }
}

//! High-level runs shared by the command-line tool and the Python
//! bindings: each command turns a [`SimConfig`] into a JSON summary plus
//! CSV-ready tables, leaving file layout to the caller.
//!
//! Monte-Carlo commands run two arms: the configured RF drive ("signal")
//! and the same sequence with the drive amplitude set to zero
//! ("reference").  The reference arm is seeded with `seed + 1` so the two
//! arms draw independent noise.

use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{ConfigError, ProtocolKind, SimConfig, SweepVariable, RF_TIME_BANDWIDTH};
use crate::dsp::{power_spectrum, simulate_faraday_photocurrent, DspError, PulseSampling};
use crate::estimation::{
    coupling_calibration, mean_and_variance, noise_budget, optimize_mode_gamma,
    regression_slope, sensitivity, snr, subtract_scaled, EstimationError, SnrReport,
};
use crate::modes::ModeLabel;
use crate::output::{col, ColumnSpec, CsvValue};
use crate::physics::{
    detected_quadrature_variance, pn_limited_sensitivity, rf_displacement, PhysicsError,
};
use crate::protocol::{
    entanglement_protocol_prediction, monte_carlo, pn_protocol_prediction,
    run_calibration_protocol, run_entanglement_protocol, run_pn_protocol, LightQuadrature,
    ProtocolError, ShotEnsemble, StageReport,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error("{0}")]
    Invalid(String),
}

impl RunError {
    /// Process exit code: 2 for configuration problems, 3 for runtime
    /// failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Invalid(_) => 2,
            _ => 3,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub seed: u64,
    pub shots: u64,
    pub parallel: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            seed: 1,
            shots: 2000,
            parallel: true,
        }
    }
}

/// One CSV table ready to be written.
#[derive(Debug)]
pub struct Table {
    pub name: String,
    pub description: String,
    pub columns: Vec<ColumnSpec>,
    pub rows: Vec<Vec<CsvValue>>,
}

/// What a command produced: a JSON summary and zero or more tables.
#[derive(Debug)]
pub struct RunResult {
    pub summary: Value,
    pub tables: Vec<Table>,
}

fn var_column_name(label: ModeLabel) -> String {
    format!("var_{}", label.as_str().replace('.', "_"))
}

fn timeline_table(stages: &[StageReport]) -> Table {
    let mut columns = vec![
        col("stage", "label", "sequence stage"),
        col("time_s", "s", "elapsed time since the pump"),
    ];
    let mode_order: Vec<ModeLabel> = stages
        .first()
        .map(|s| s.atom_vars.iter().map(|&(m, _)| m).collect())
        .unwrap_or_default();
    for &m in &mode_order {
        columns.push(col(
            &var_column_name(m),
            "1/2 = coherent state",
            "conditional variance of this atomic quadrature",
        ));
    }
    let with_epr = !stages.is_empty() && stages.iter().all(|s| s.epr_sum.is_some());
    if with_epr {
        columns.push(col(
            "epr_sum",
            "1 = coherent-state pair",
            "normalized var(z+) + var(y+); below 1 certifies entanglement",
        ));
    }
    let rows = stages
        .iter()
        .map(|s| {
            let mut row: Vec<CsvValue> =
                vec![s.stage.as_str().into(), s.time.into()];
            for &m in &mode_order {
                let v = s
                    .atom_vars
                    .iter()
                    .find(|&&(l, _)| l == m)
                    .map(|&(_, v)| v)
                    .unwrap_or(f64::NAN);
                row.push(v.into());
            }
            if with_epr {
                row.push(s.epr_sum.unwrap_or(f64::NAN).into());
            }
            row
        })
        .collect();
    Table {
        name: "timeline.csv".to_string(),
        description: "exact conditional atomic variances along the sequence".to_string(),
        columns,
        rows,
    }
}

fn outcomes_table(arms: &[(&str, &ShotEnsemble)]) -> Table {
    let columns = vec![
        col("shot", "index", "shot number within its arm"),
        col("arm", "label", "signal (RF on) or reference (RF off)"),
        col("pulse", "label", "which probe pulse"),
        col("s2c", "shot-noise spread", "detected cosine lock-in quadrature"),
        col("s2s", "shot-noise spread", "detected sine lock-in quadrature"),
    ];
    let mut rows = Vec::new();
    for (arm, ens) in arms {
        for rec in &ens.records {
            for p in &rec.pulses {
                rows.push(vec![
                    CsvValue::Int(rec.shot),
                    (*arm).into(),
                    p.pulse.as_str().into(),
                    p.s2c.into(),
                    p.s2s.into(),
                ]);
            }
        }
    }
    Table {
        name: "outcomes.csv".to_string(),
        description: "per-shot detected lock-in outcomes for both arms".to_string(),
        columns,
        rows,
    }
}

fn snr_json(r: &SnrReport) -> Value {
    json!({
        "snr": r.snr,
        "snr_pooled": r.snr_pooled,
        "mean_signal": r.mean_signal,
        "mean_reference": r.mean_reference,
        "std_signal": r.std_signal,
        "std_reference": r.std_reference,
        "n_signal": r.n_signal,
        "n_reference": r.n_reference,
    })
}

fn stage_var(stages: &[StageReport], stage: &str, mode: ModeLabel) -> Option<f64> {
    stages
        .iter()
        .find(|s| s.stage == stage)
        .and_then(|s| s.atom_vars.iter().find(|&&(l, _)| l == mode))
        .map(|&(_, v)| v)
}

/// The atomic quadrature the RF drive displaces into the detected cosine
/// channel: z+ for two cells, z for one.
fn signal_mode(cfg: &SimConfig) -> ModeLabel {
    if cfg.apparatus.ensemble.n_cells == 2 {
        ModeLabel::AtomZPlus
    } else {
        ModeLabel::AtomZ
    }
}

fn base_summary(command: &str, cfg: &SimConfig, opts: &RunOptions) -> Value {
    let p2 = &cfg.probe2;
    json!({
        "command": command,
        "protocol": cfg.protocol,
        "seed": opts.seed,
        "shots": opts.shots,
        "carrier_hz": cfg.carrier_hz(),
        "cycle_time_s": cfg.cycle_time(),
        "atoms_total": cfg.apparatus.ensemble.n_total(),
        "rf": {
            "amplitude_t": cfg.rf.amplitude,
            "duration_s": cfg.rf.duration,
            "phase_rad": cfg.rf.phase,
        },
        "readout": {
            "kappa_squared": p2.coupling().powi(2),
            "transmission_squared": p2.transmission().powi(2),
            "efficiency": p2.efficiency,
            "duration_s": p2.duration,
        },
    })
}

fn merge(base: &mut Value, extra: Value) {
    if let (Some(b), Some(e)) = (base.as_object_mut(), extra.as_object()) {
        for (k, v) in e {
            b.insert(k.clone(), v.clone());
        }
    }
}

fn pn_limit_json(cfg: &SimConfig) -> Result<Value, RunError> {
    let lim = pn_limited_sensitivity(
        &cfg.apparatus.constants,
        &cfg.apparatus.ensemble,
        cfg.rf.duration,
    )?;
    Ok(json!({
        "b_min_t": lim.b_min,
        "sensitivity_t_per_sqrt_hz": lim.sensitivity,
        "effective_duration_s": lim.effective_duration,
        "rf_window_s": cfg.rf.duration,
    }))
}

/// Both sensitivity conventions for one SNR; null when the SNR is not a
/// positive number (for example a zero-amplitude drive).
fn sensitivities_json(cfg: &SimConfig, snr_value: f64) -> Value {
    json!({
        "sensitivity_rf_window_t_per_sqrt_hz":
            sensitivity(cfg.rf.amplitude, cfg.rf.duration, snr_value).unwrap_or(f64::NAN),
        "sensitivity_cycle_t_per_sqrt_hz":
            sensitivity(cfg.rf.amplitude, cfg.cycle_time(), snr_value).unwrap_or(f64::NAN),
    })
}

fn simulate_pn(cfg: &SimConfig, opts: &RunOptions) -> Result<RunResult, RunError> {
    let app = cfg.apparatus;
    let seq = cfg.pn_sequence();
    let mut ref_seq = seq;
    ref_seq.rf.amplitude = 0.0;

    let (pred_sig, stages) = pn_protocol_prediction(&app, &seq)?;
    let (pred_ref, _) = pn_protocol_prediction(&app, &ref_seq)?;
    let eq = app.ensemble.equilibrium_var();
    let v_in = stage_var(&stages, "rf", signal_mode(cfg)).unwrap_or(eq);
    let pred_std = detected_quadrature_variance(&cfg.probe2, v_in, eq).sqrt();
    let pred_mean_sig = pred_sig.outcome("readout").map(|p| p.s2c).unwrap_or(0.0);
    let pred_mean_ref = pred_ref.outcome("readout").map(|p| p.s2c).unwrap_or(0.0);
    let pred_snr = (pred_mean_sig - pred_mean_ref).abs() / pred_std;

    let sig = monte_carlo(opts.shots, opts.seed, opts.parallel, |rng| {
        run_pn_protocol(&app, &seq, rng)
    })?;
    let reference = monte_carlo(opts.shots, opts.seed.wrapping_add(1), opts.parallel, |rng| {
        run_pn_protocol(&app, &ref_seq, rng)
    })?;

    let sig_c = sig.outcomes("readout", LightQuadrature::S2c);
    let ref_c = reference.outcomes("readout", LightQuadrature::S2c);
    let ref_s = reference.outcomes("readout", LightQuadrature::S2s);
    let report = snr(&sig_c, &ref_c)?;

    let (_, raw_c) = mean_and_variance(&ref_c)?;
    let (_, raw_s) = mean_and_variance(&ref_s)?;
    let budget = match noise_budget(raw_c, raw_s, &cfg.probe2) {
        Ok(b) => json!({
            "total_shot_units": b.total_shot_units,
            "light_shot_units": b.light_shot_units,
            "atomic_shot_units": b.atomic_shot_units,
            "atomic_css_units": b.atomic_css_units,
            "atomic_css_simplified": b.atomic_css_simplified,
        }),
        Err(e) => json!({ "error": e.to_string() }),
    };

    let mut summary = base_summary("simulate", cfg, opts);
    let mut predicted = json!({
        "mean_signal": pred_mean_sig,
        "mean_reference": pred_mean_ref,
        "detected_std": pred_std,
        "snr": pred_snr,
    });
    merge(&mut predicted, sensitivities_json(cfg, pred_snr));
    let mut measured = snr_json(&report);
    merge(&mut measured, sensitivities_json(cfg, report.snr));
    merge(
        &mut measured,
        json!({
            "detected_var_s2c_reference": raw_c,
            "detected_var_s2s_reference": raw_s,
        }),
    );
    merge(
        &mut summary,
        json!({
            "pn_limit": pn_limit_json(cfg)?,
            "predicted": predicted,
            "measured": measured,
            "noise_budget_reference": budget,
        }),
    );

    let mut tables = vec![timeline_table(&stages)];
    if cfg.write_shots {
        tables.push(outcomes_table(&[("signal", &sig), ("reference", &reference)]));
    }
    Ok(RunResult { summary, tables })
}

/// Deterministic figures of one entangled configuration: EPR sums from
/// the exact timeline, the mean-path SNR through the conditional readout
/// noise, and the noise gain over an unentangled (coherent-state) input
/// through the same readout.
struct EntangledPrediction {
    stages: Vec<StageReport>,
    epr_after_probe1: f64,
    epr_at_delay: f64,
    mean_signal: f64,
    conditional_std: f64,
    unentangled_std: f64,
    snr: f64,
}

fn predict_entangled(cfg: &SimConfig) -> Result<EntangledPrediction, RunError> {
    let app = cfg.apparatus;
    let seq = cfg.entanglement_sequence();
    let mut ref_seq = seq;
    if let Some(rf) = ref_seq.rf.as_mut() {
        rf.amplitude = 0.0;
    }
    let (pred_sig, stages) = entanglement_protocol_prediction(&app, &seq)?;
    let (pred_ref, _) = entanglement_protocol_prediction(&app, &ref_seq)?;
    let eq = app.ensemble.equilibrium_var();
    // Variance entering the readout: after the RF window when present,
    // else after the delay.
    let v_in = stage_var(&stages, "rf", ModeLabel::AtomZPlus)
        .or_else(|| stage_var(&stages, "delay", ModeLabel::AtomZPlus))
        .unwrap_or(eq);
    let conditional_std = detected_quadrature_variance(&cfg.probe2, v_in, eq).sqrt();
    let unentangled_std = detected_quadrature_variance(&cfg.probe2, eq, eq).sqrt();
    let mean_signal = pred_sig.outcome("probe2").map(|p| p.s2c).unwrap_or(0.0)
        - pred_ref.outcome("probe2").map(|p| p.s2c).unwrap_or(0.0);
    let epr = |stage: &str| {
        stages
            .iter()
            .find(|s| s.stage == stage)
            .and_then(|s| s.epr_sum)
            .unwrap_or(f64::NAN)
    };
    Ok(EntangledPrediction {
        epr_after_probe1: epr("probe1"),
        epr_at_delay: epr("delay"),
        mean_signal,
        conditional_std,
        unentangled_std,
        snr: mean_signal.abs() / conditional_std,
        stages,
    })
}

fn simulate_entangled(cfg: &SimConfig, opts: &RunOptions) -> Result<RunResult, RunError> {
    let app = cfg.apparatus;
    let seq = cfg.entanglement_sequence();
    let mut ref_seq = seq;
    if let Some(rf) = ref_seq.rf.as_mut() {
        rf.amplitude = 0.0;
    }
    let pred = predict_entangled(cfg)?;

    let sig = monte_carlo(opts.shots, opts.seed, opts.parallel, |rng| {
        run_entanglement_protocol(&app, &seq, rng)
    })?;
    let reference = monte_carlo(opts.shots, opts.seed.wrapping_add(1), opts.parallel, |rng| {
        run_entanglement_protocol(&app, &ref_seq, rng)
    })?;

    // The entangling pulse's outcome corrects the readout shot by shot;
    // the slope is calibrated on the reference arm.
    let sig1 = sig.outcomes("probe1", LightQuadrature::S2c);
    let sig2 = sig.outcomes("probe2", LightQuadrature::S2c);
    let ref1 = reference.outcomes("probe1", LightQuadrature::S2c);
    let ref2 = reference.outcomes("probe2", LightQuadrature::S2c);
    let beta = regression_slope(&ref2, &ref1)?;
    let resid_sig = subtract_scaled(&sig2, &sig1, beta);
    let resid_ref = subtract_scaled(&ref2, &ref1, beta);
    let corrected = snr(&resid_sig, &resid_ref)?;
    let uncorrected = snr(&sig2, &ref2)?;

    let mut summary = base_summary("simulate", cfg, opts);
    let mut predicted = json!({
        "mean_signal": pred.mean_signal,
        "conditional_std": pred.conditional_std,
        "unentangled_std": pred.unentangled_std,
        "snr": pred.snr,
        "snr_gain_vs_unentangled": pred.unentangled_std / pred.conditional_std,
        "epr_after_probe1": pred.epr_after_probe1,
        "epr_at_delay": pred.epr_at_delay,
        "epr_db_at_delay": 10.0 * pred.epr_at_delay.log10(),
    });
    merge(&mut predicted, sensitivities_json(cfg, pred.snr));
    let mut measured = snr_json(&corrected);
    merge(&mut measured, sensitivities_json(cfg, corrected.snr));
    merge(
        &mut measured,
        json!({
            "correction_slope": beta,
            "snr_uncorrected": uncorrected.snr,
            "conditional_var_corrected": corrected.std_reference.powi(2),
            "raw_var_uncorrected": uncorrected.std_reference.powi(2),
        }),
    );
    merge(
        &mut summary,
        json!({
            "pn_limit": pn_limit_json(cfg)?,
            "entangling_pulse": {
                "kappa_squared": cfg.probe1.coupling().powi(2),
                "duration_s": cfg.probe1.duration,
                "delay_s": cfg.delay,
            },
            "predicted": predicted,
            "measured": measured,
        }),
    );

    let mut tables = vec![timeline_table(&pred.stages)];
    if cfg.write_shots {
        tables.push(outcomes_table(&[("signal", &sig), ("reference", &reference)]));
    }
    Ok(RunResult { summary, tables })
}

fn simulate_calibration(cfg: &SimConfig, opts: &RunOptions) -> Result<RunResult, RunError> {
    let app = cfg.apparatus;
    let seq = cfg.calibration_sequence();
    let ens = monte_carlo(opts.shots, opts.seed, opts.parallel, |rng| {
        run_calibration_protocol(&app, &seq, rng)
    })?;
    let s2s = ens.outcomes("pulse2", LightQuadrature::S2s);
    let est = coupling_calibration(&s2s, seq.strength, seq.probe.efficiency)?;
    let true_k2 = seq.probe.coupling().powi(2);

    let mut summary = base_summary("simulate", cfg, opts);
    merge(
        &mut summary,
        json!({
            "calibration": {
                "tone_strength": seq.strength,
                "kappa_squared_estimate": est.value,
                "std_error": est.std_error,
                "kappa_squared_true": true_k2,
                "relative_error": (est.value - true_k2) / true_k2,
            },
        }),
    );
    let mut tables = Vec::new();
    if cfg.write_shots {
        tables.push(outcomes_table(&[("signal", &ens)]));
    }
    Ok(RunResult { summary, tables })
}

/// `simulate`: run the configured protocol end to end.
pub fn run_simulate(cfg: &SimConfig, opts: &RunOptions) -> Result<RunResult, RunError> {
    match cfg.protocol {
        ProtocolKind::Pn => simulate_pn(cfg, opts),
        ProtocolKind::Entangled => simulate_entangled(cfg, opts),
        ProtocolKind::Calibration => simulate_calibration(cfg, opts),
    }
}

/// `sweep`: evaluate the entangled protocol's deterministic predictions
/// (and, when shots > 0, a Monte-Carlo SNR) across the configured grid.
pub fn run_sweep(cfg: &SimConfig, opts: &RunOptions) -> Result<RunResult, RunError> {
    let sweep = cfg.sweep.clone().ok_or_else(|| {
        RunError::Invalid("the sweep command needs a [sweep] section in the config".to_string())
    })?;
    if cfg.protocol != ProtocolKind::Entangled {
        return Err(RunError::Invalid(
            "sweeps apply to the entangled protocol; set protocol.kind = \"entangled\""
                .to_string(),
        ));
    }

    let (x_name, x_unit, x_desc) = match sweep.variable {
        SweepVariable::Delay => ("delay_s", "s", "dark delay before the RF window"),
        SweepVariable::RfBandwidth => (
            "bandwidth_hz",
            "Hz",
            "equivalent noise bandwidth of the RF window",
        ),
    };
    let mut columns = vec![
        col(x_name, x_unit, x_desc),
        col("rf_duration_s", "s", "RF window duration at this point"),
        col("epr_at_delay", "1 = boundary", "EPR sum entering the RF window"),
        col("epr_db_at_delay", "dB", "EPR sum in decibels"),
        col("snr_predicted", "1", "mean-path SNR through conditional noise"),
        col(
            "snr_gain_vs_unentangled",
            "1",
            "readout noise ratio: coherent-state input over conditioned input",
        ),
        col(
            "sensitivity_rf_window_t_per_sqrt_hz",
            "T/sqrt(Hz)",
            "predicted sensitivity charging only the RF window",
        ),
        col(
            "sensitivity_cycle_t_per_sqrt_hz",
            "T/sqrt(Hz)",
            "predicted sensitivity charging the whole cycle",
        ),
    ];
    let with_mc = opts.shots > 0;
    if with_mc {
        columns.push(col("snr_mc", "1", "Monte-Carlo SNR with shot-by-shot correction"));
    }

    let mut rows: Vec<Vec<CsvValue>> = Vec::new();
    let mut points = Vec::new();
    for (i, &x) in sweep.values.iter().enumerate() {
        let mut c = cfg.clone();
        match sweep.variable {
            SweepVariable::Delay => c.delay = x,
            SweepVariable::RfBandwidth => c.rf.duration = RF_TIME_BANDWIDTH / x,
        }
        let pred = predict_entangled(&c)?;
        let gain = pred.unentangled_std / pred.conditional_std;
        let sens_rf =
            sensitivity(c.rf.amplitude, c.rf.duration, pred.snr).unwrap_or(f64::NAN);
        let sens_cycle =
            sensitivity(c.rf.amplitude, c.cycle_time(), pred.snr).unwrap_or(f64::NAN);
        let mut row: Vec<CsvValue> = vec![
            x.into(),
            c.rf.duration.into(),
            pred.epr_at_delay.into(),
            (10.0 * pred.epr_at_delay.log10()).into(),
            pred.snr.into(),
            gain.into(),
            sens_rf.into(),
            sens_cycle.into(),
        ];
        let mut point = json!({
            x_name: x,
            "rf_duration_s": c.rf.duration,
            "epr_at_delay": pred.epr_at_delay,
            "snr_predicted": pred.snr,
            "snr_gain_vs_unentangled": gain,
            "sensitivity_rf_window_t_per_sqrt_hz": sens_rf,
            "sensitivity_cycle_t_per_sqrt_hz": sens_cycle,
        });
        if with_mc {
            let app = c.apparatus;
            let seq = c.entanglement_sequence();
            let mut ref_seq = seq;
            if let Some(rf) = ref_seq.rf.as_mut() {
                rf.amplitude = 0.0;
            }
            let seed = opts.seed.wrapping_add(2 * i as u64);
            let sig = monte_carlo(opts.shots, seed, opts.parallel, |rng| {
                run_entanglement_protocol(&app, &seq, rng)
            })?;
            let reference =
                monte_carlo(opts.shots, seed.wrapping_add(1), opts.parallel, |rng| {
                    run_entanglement_protocol(&app, &ref_seq, rng)
                })?;
            let beta = regression_slope(
                &reference.outcomes("probe2", LightQuadrature::S2c),
                &reference.outcomes("probe1", LightQuadrature::S2c),
            )?;
            let resid_sig = subtract_scaled(
                &sig.outcomes("probe2", LightQuadrature::S2c),
                &sig.outcomes("probe1", LightQuadrature::S2c),
                beta,
            );
            let resid_ref = subtract_scaled(
                &reference.outcomes("probe2", LightQuadrature::S2c),
                &reference.outcomes("probe1", LightQuadrature::S2c),
                beta,
            );
            let r = snr(&resid_sig, &resid_ref)?;
            row.push(r.snr.into());
            merge(&mut point, json!({ "snr_mc": r.snr }));
        }
        rows.push(row);
        points.push(point);
    }

    let mut summary = base_summary("sweep", cfg, opts);
    merge(
        &mut summary,
        json!({
            "sweep_variable": sweep.variable,
            "points": points,
        }),
    );
    Ok(RunResult {
        summary,
        tables: vec![Table {
            name: "sweep.csv".to_string(),
            description: "deterministic predictions (and Monte-Carlo SNR) per grid point"
                .to_string(),
            columns,
            rows,
        }],
    })
}

/// `pn-limit`: the projection-noise-limited field resolution of the
/// configured ensemble and RF window.  No sampling.
pub fn run_pn_limit(cfg: &SimConfig, opts: &RunOptions) -> Result<RunResult, RunError> {
    let lim = pn_limited_sensitivity(
        &cfg.apparatus.constants,
        &cfg.apparatus.ensemble,
        cfg.rf.duration,
    )?;
    let mut summary = base_summary("pn-limit", cfg, opts);
    merge(&mut summary, json!({ "pn_limit": pn_limit_json(cfg)? }))
        ;
    let table = Table {
        name: "pn_limit.csv".to_string(),
        description: "projection-noise-limited resolution of the configured window".to_string(),
        columns: vec![
            col("b_min_t", "T", "smallest resolvable field in one window"),
            col("sensitivity_t_per_sqrt_hz", "T/sqrt(Hz)", "b_min scaled by sqrt(window)"),
            col("effective_duration_s", "s", "decay-corrected accumulation time"),
            col("rf_window_s", "s", "RF window duration"),
            col("larmor_hz", "Hz", "carrier frequency"),
            col("atoms_total", "1", "total atom number"),
        ],
        rows: vec![vec![
            lim.b_min.into(),
            lim.sensitivity.into(),
            lim.effective_duration.into(),
            cfg.rf.duration.into(),
            cfg.carrier_hz().into(),
            cfg.apparatus.ensemble.n_total().into(),
        ]],
    };
    Ok(RunResult {
        summary,
        tables: vec![table],
    })
}

/// `calibrate`: the two-pulse coupling calibration, whatever
/// protocol.kind says.
pub fn run_calibrate(cfg: &SimConfig, opts: &RunOptions) -> Result<RunResult, RunError> {
    simulate_calibration(cfg, opts)
}

/// `optimize-mode`: scan the temporal-mode decay rate of the readout and
/// report the SNR-optimal choice.
pub fn run_optimize_mode(cfg: &SimConfig, opts: &RunOptions) -> Result<RunResult, RunError> {
    let eq = cfg.apparatus.ensemble.equilibrium_var();
    let total = cfg.probe2.gamma_swap + cfg.probe2.gamma_extra;
    let optimum = optimize_mode_gamma(&cfg.probe2, eq, eq, 0.1 * total, 3.0 * total, 61)?;
    let rows = optimum
        .curve
        .iter()
        .map(|&(g, s)| vec![CsvValue::Float(g), CsvValue::Float(s)])
        .collect();
    let mut summary = base_summary("optimize-mode", cfg, &RunOptions { shots: 0, ..*opts });
    merge(
        &mut summary,
        json!({
            "mode_optimum": {
                "gamma_1_per_s": optimum.gamma,
                "gamma_over_total_decay": optimum.gamma / total,
                "snr_core": optimum.snr_core,
                "grid_points": optimum.curve.len(),
            },
        }),
    );
    Ok(RunResult {
        summary,
        tables: vec![Table {
            name: "mode_curve.csv".to_string(),
            description: "single-shot SNR kernel versus temporal-mode decay rate".to_string(),
            columns: vec![
                col("mode_gamma_1_per_s", "1/s", "demodulation mode decay rate"),
                col("snr_core", "1", "gain over detected noise, per unit displacement"),
            ],
            rows,
        }],
    })
}

/// `spectrum`: average periodograms of the simulated photocurrent during
/// the readout, with the atoms displaced by the configured RF drive.
pub fn run_spectrum(cfg: &SimConfig, opts: &RunOptions) -> Result<RunResult, RunError> {
    let app = cfg.apparatus;
    let eq = app.ensemble.equilibrium_var();
    let duration = cfg.dsp.spectrum_duration.unwrap_or(cfg.probe2.duration);
    let sampling = PulseSampling {
        carrier_hz: cfg.carrier_hz(),
        sample_rate: cfg.sample_rate(),
        duration,
    };
    sampling.validate()?;
    let (dz, dy) = rf_displacement(&app.constants, &app.ensemble, &cfg.rf)?;
    let atom_mean = dz.hypot(dy);

    let records = cfg.dsp.spectrum_shots.max(1);
    let mut avg: Vec<f64> = Vec::new();
    let mut freqs: Vec<f64> = Vec::new();
    let mut resolution = 0.0;
    for i in 0..records {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(i as u64);
        let mut series =
            simulate_faraday_photocurrent(&cfg.probe2, &sampling, atom_mean, eq, eq, &mut rng)?;
        if let Some(bw) = cfg.dsp.detection_bandwidth {
            series = crate::dsp::one_pole_lowpass(&series, bw)?;
        }
        let ps = power_spectrum(&series)?;
        if avg.is_empty() {
            avg = vec![0.0; ps.psd.len()];
            freqs = ps.freqs;
            resolution = ps.resolution;
        }
        for (a, p) in avg.iter_mut().zip(&ps.psd) {
            *a += p / records as f64;
        }
    }

    // Strongest bin away from DC.
    let peak = freqs
        .iter()
        .zip(&avg)
        .skip(1)
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(&f, &p)| (f, p))
        .unwrap_or((0.0, 0.0));

    let rows = freqs
        .iter()
        .zip(&avg)
        .map(|(&f, &p)| vec![CsvValue::Float(f), CsvValue::Float(p)])
        .collect();
    let mut summary = base_summary("spectrum", cfg, opts);
    merge(
        &mut summary,
        json!({
            "spectrum": {
                "records": records,
                "duration_s": duration,
                "sample_rate_hz": sampling.sample_rate,
                "resolution_hz": resolution,
                "peak_freq_hz": peak.0,
                "peak_psd": peak.1,
                "atom_displacement": atom_mean,
            },
        }),
    );
    Ok(RunResult {
        summary,
        tables: vec![Table {
            name: "spectrum.csv".to_string(),
            description: "averaged one-sided periodogram of the readout photocurrent"
                .to_string(),
            columns: vec![
                col("freq_hz", "Hz", "bin frequency"),
                col("psd", "(shot units)^2/Hz", "power spectral density"),
            ],
            rows,
        }],
    })
}

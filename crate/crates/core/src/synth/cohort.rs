//! Synthetic clinical-style cohort with planted downstream signal.
//!
//! Each patient is an independent multivariate Hawkes realization over
//! quarterly time. A patient-specific risk rate (driven by statics plus a
//! latent frailty) feeds a long-memory excitation into a rare outcome type,
//! so pre-index history genuinely predicts post-index outcomes. The cohort
//! table carries labels and costs computed from the post-index window, a
//! deliberately information-free null label and cost, generator-side risk
//! scores of two strengths, and the confounded treatment flag used by the
//! matching analyses.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{sample_hawkes, sample_normal, HawkesSpec, Result, SynthError};
use crate::data::{FactRow, PatientId};
use crate::rng::derive_rng;

/// Event type indices inside the per-patient process.
const RISK: usize = 0;
const OUTCOME: usize = 1;
const VISIT: usize = 2;
const RX_A: usize = 3;
const RX_B: usize = 4;

const TYPE_CONCEPTS: [&str; 5] = ["dx_risk", "dx_outcome", "visit", "rx_a", "rx_b"];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortSpec {
    pub n_patients: usize,
    /// Observation span in quarters, relative to each patient's start.
    pub t_total: f64,
    /// Index cut, in relative quarters; history before it is observable.
    pub index_quarter: f64,
    /// Interval offset of relative time zero, so generated facts start a
    /// few quarters after the static attributes at interval 0.
    pub calendar_offset: u32,

    /// Baseline risk-event rate before static/frailty adjustment.
    pub base_risk: f64,
    pub age_coef: f64,
    pub male_coef: f64,
    pub frailty_sd: f64,

    pub mu_outcome: f64,
    pub mu_visit: f64,
    pub mu_rx: f64,

    /// (jump, decay) pairs for the excitation kernels.
    pub risk_self: (f64, f64),
    pub outcome_from_risk: (f64, f64),
    pub outcome_self: (f64, f64),
    pub visit_from_risk: (f64, f64),
    pub rx_from_risk: (f64, f64),

    pub cost_base: f64,
    pub cost_per_outcome: f64,
    pub cost_per_risk: f64,
    pub cost_noise_sd: f64,

    pub treat_bias: f64,
    pub treat_age: f64,
    pub treat_male: f64,
    pub treat_risk: f64,

    pub lab_base: f64,
    pub lab_frailty: f64,
    pub lab_noise_sd: f64,
    pub lab_prob: f64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        CohortSpec {
            n_patients: 1000,
            t_total: 36.0,
            index_quarter: 20.0,
            calendar_offset: 4,
            base_risk: 0.2,
            age_coef: 0.35,
            male_coef: 0.2,
            frailty_sd: 1.4,
            mu_outcome: 0.002,
            mu_visit: 1.4,
            mu_rx: 0.22,
            risk_self: (0.25, 0.8),
            outcome_from_risk: (0.008, 0.1),
            outcome_self: (0.1, 0.5),
            visit_from_risk: (0.3, 1.5),
            rx_from_risk: (0.22, 1.2),
            cost_base: 60.0,
            cost_per_outcome: 45.0,
            cost_per_risk: 6.0,
            cost_noise_sd: 25.0,
            treat_bias: -0.4,
            treat_age: 0.5,
            treat_male: 0.45,
            treat_risk: 0.35,
            lab_base: 100.0,
            lab_frailty: 8.0,
            lab_noise_sd: 4.0,
            lab_prob: 0.5,
        }
    }
}

impl CohortSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_patients == 0 {
            return Err(SynthError::Invalid("n_patients must be positive".into()));
        }
        if !(self.index_quarter > 0.0 && self.index_quarter < self.t_total) {
            return Err(SynthError::Invalid(format!(
                "index quarter {} must fall inside (0, {})",
                self.index_quarter, self.t_total
            )));
        }
        // The kernels must keep every patient's process stationary; check
        // the highest-risk configuration that can realistically occur.
        self.patient_process(self.base_risk * (3.0 * self.frailty_sd + self.age_coef * 2.0 + self.male_coef).exp())
            .validate()
    }

    /// Absolute interval of the index cut.
    pub fn index_interval(&self) -> u32 {
        self.calendar_offset + self.index_quarter as u32
    }

    /// Hawkes spec for one patient given their risk baseline.
    fn patient_process(&self, mu_risk: f64) -> HawkesSpec {
        let k = TYPE_CONCEPTS.len();
        let mut alpha = vec![vec![0.0; k]; k];
        let mut beta = vec![vec![1.0; k]; k];
        let mut set = |target: usize, source: usize, (a, b): (f64, f64)| {
            alpha[target][source] = a;
            beta[target][source] = b;
        };
        set(RISK, RISK, self.risk_self);
        set(OUTCOME, RISK, self.outcome_from_risk);
        set(OUTCOME, OUTCOME, self.outcome_self);
        set(VISIT, RISK, self.visit_from_risk);
        set(RX_A, RISK, self.rx_from_risk);
        set(RX_B, RISK, self.rx_from_risk);
        HawkesSpec { mu: vec![mu_risk, self.mu_outcome, self.mu_visit, self.mu_rx, self.mu_rx], alpha, beta }
    }

    /// Approximate expected number of post-index outcome events given the
    /// pre-index history and the patient's true risk rate: remaining
    /// excitation mass from observed risk events, plus mass from risk events
    /// yet to come, with the outcome self-excitation uplift applied.
    fn expected_outcomes(&self, risk_times: &[f64], mu_risk: f64) -> f64 {
        let (a_or, b_or) = self.outcome_from_risk;
        let (a_oo, b_oo) = self.outcome_self;
        let (a_rr, b_rr) = self.risk_self;
        let t_i = self.index_quarter;
        let t_f = self.t_total;
        let window = t_f - t_i;

        let pre_mass: f64 = risk_times
            .iter()
            .filter(|&&t| t < t_i)
            .map(|&t| a_or / b_or * ((-b_or * (t_i - t)).exp() - (-b_or * (t_f - t)).exp()))
            .sum();
        let risk_rate = mu_risk / (1.0 - a_rr / b_rr);
        let per_unit_rate = a_or / b_or * (window - (1.0 - (-b_or * window).exp()) / b_or);
        let post_mass = risk_rate * per_unit_rate;
        let uplift = 1.0 / (1.0 - a_oo / b_oo);
        (self.mu_outcome * window + pre_mass + post_mass) * uplift
    }
}

/// One row of the cohort table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortRow {
    pub patient_id: PatientId,
    pub cohort: u8,
    pub index_interval: u32,
    pub outcome_planted: u8,
    pub outcome_null: u8,
    pub treated: u8,
    pub cost_cv: f64,
    pub cost_all: f64,
    pub score_strong: f64,
    pub score_weak: f64,
    pub cov_age: f64,
    pub cov_male: f64,
    pub cov_race_b: f64,
    pub cov_race_c: f64,
    pub cov_risk_pre: f64,
    pub cov_lab: f64,
}

const AGE_LEVELS: [&str; 5] = ["30s", "40s", "50s", "60s", "70s"];
const RACE_LEVELS: [&str; 3] = ["a", "b", "c"];

/// Generates the fact table and the cohort table. Every patient is
/// produced from its own seed substream, so regeneration with the same
/// seed is exact regardless of ordering or parallelism.
pub fn gen_cohort(spec: &CohortSpec, seed: u64) -> Result<(Vec<FactRow>, Vec<CohortRow>)> {
    spec.validate()?;
    let mut facts = Vec::new();
    let mut rows = Vec::with_capacity(spec.n_patients);

    for pid_n in 1..=spec.n_patients as u64 {
        let pid: PatientId = pid_n.to_string();
        let mut rng = derive_rng(seed, &format!("cohort/{pid}"));

        let age_idx = rng.gen_range(0..AGE_LEVELS.len());
        let male = rng.gen_bool(0.5);
        let race_idx = {
            let u: f64 = rng.gen();
            if u < 0.5 {
                0
            } else if u < 0.8 {
                1
            } else {
                2
            }
        };
        let frailty = spec.frailty_sd * sample_normal(&mut rng);
        let mu_risk = spec.base_risk
            * (spec.age_coef * (age_idx as f64 - 2.0) + spec.male_coef * (male as u8 as f64) + frailty).exp();

        let process = spec.patient_process(mu_risk);
        let events = sample_hawkes(&process, spec.t_total, &mut rng)?;

        facts.push(FactRow { patient_id: pid.clone(), interval: 0, concept: format!("gender:{}", if male { "m" } else { "f" }), value: None });
        facts.push(FactRow { patient_id: pid.clone(), interval: 0, concept: format!("race:{}", RACE_LEVELS[race_idx]), value: None });
        facts.push(FactRow { patient_id: pid.clone(), interval: 0, concept: format!("pseudo_age:{}", AGE_LEVELS[age_idx]), value: None });

        let lab_center = spec.lab_base + spec.lab_frailty * frailty;
        let mut pre_risk_times = Vec::new();
        let mut n_risk_pre = 0usize;
        let mut n_risk_post = 0usize;
        let mut n_outcome_post = 0usize;
        let mut lab_sum = 0.0f64;
        let mut lab_count = 0usize;
        for &(t, ty) in &events {
            let interval = spec.calendar_offset + t as u32;
            facts.push(FactRow { patient_id: pid.clone(), interval, concept: TYPE_CONCEPTS[ty].into(), value: None });
            match ty {
                RISK if t < spec.index_quarter => {
                    pre_risk_times.push(t);
                    n_risk_pre += 1;
                }
                RISK => n_risk_post += 1,
                OUTCOME if t >= spec.index_quarter => n_outcome_post += 1,
                VISIT => {
                    if rng.gen_bool(spec.lab_prob) {
                        let value = lab_center + spec.lab_noise_sd * sample_normal(&mut rng);
                        let value = (value * 100.0).round() / 100.0;
                        facts.push(FactRow { patient_id: pid.clone(), interval, concept: "lab_x".into(), value: Some(value) });
                        if t < spec.index_quarter {
                            lab_sum += value;
                            lab_count += 1;
                        }
                    }
                }
                _ => {}
            }
        }

        let expected_o = spec.expected_outcomes(&pre_risk_times, mu_risk);
        let base_score = expected_o.ln_1p();
        let score_strong = base_score + 0.05 * sample_normal(&mut rng);
        let score_weak = base_score + 1.0 * sample_normal(&mut rng);

        let cost_cv = (spec.cost_base
            + spec.cost_per_outcome * n_outcome_post as f64
            + spec.cost_per_risk * n_risk_post as f64
            + spec.cost_noise_sd * sample_normal(&mut rng))
        .max(0.0);
        let cost_all = (spec.cost_base + 45.0 * sample_normal(&mut rng).abs()).max(0.0);

        let z_age = (age_idx as f64 - 2.0) / 1.414;
        let z_risk = (n_risk_pre as f64).ln_1p() - 2.0;
        let treat_logit =
            spec.treat_bias + spec.treat_age * z_age + spec.treat_male * (male as u8 as f64) + spec.treat_risk * z_risk;
        let treated = rng.gen_bool(logistic(treat_logit));

        let outcome_null = derive_rng(seed, &format!("cohort-null/{pid}")).gen_bool(0.5);

        rows.push(CohortRow {
            patient_id: pid,
            cohort: (pid_n % 6) as u8,
            index_interval: spec.index_interval(),
            outcome_planted: (n_outcome_post > 0) as u8,
            outcome_null: outcome_null as u8,
            treated: treated as u8,
            cost_cv,
            cost_all,
            score_strong,
            score_weak,
            cov_age: age_idx as f64,
            cov_male: male as u8 as f64,
            cov_race_b: (race_idx == 1) as u8 as f64,
            cov_race_c: (race_idx == 2) as u8 as f64,
            cov_risk_pre: n_risk_pre as f64,
            cov_lab: if lab_count > 0 { lab_sum / lab_count as f64 } else { spec.lab_base },
        });
    }
    Ok((facts, rows))
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn write_cohort(path: &Path, rows: &[CohortRow]) -> std::result::Result<(), crate::data::DataError> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(crate::data::DataError::Io)?;
    Ok(())
}

pub fn read_cohort(path: &Path) -> std::result::Result<Vec<CohortRow>, crate::data::DataError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for record in reader.deserialize() {
        rows.push(record?);
    }
    Ok(rows)
}

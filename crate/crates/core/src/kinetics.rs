//! Rate laws for nutrient consumption, proliferation, death and the
//! proliferating/quiescent transfer, with the derived combinations
//! `K_M = K_B + K_D` and `K_N = K_P + K_Q`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KineticsError {
    #[error("nutrient level {c} outside [0,1]")]
    Domain { c: f64 },
    #[error("parameter {name} must be positive and finite (got {value})")]
    Parameter { name: &'static str, value: f64 },
    #[error("b_rate ({b}) must exceed d_rate ({d})")]
    BirthDeath { b: f64, d: f64 },
}

const DOMAIN_TOL: f64 = 1e-12;

/// Functional form of the consumption rate `F`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ConsumptionLaw {
    /// `F(c) = lambda c`
    #[default]
    Linear,
    /// `F(c) = lambda c / (1 + c)`
    Saturating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KineticsSpec {
    pub lambda: f64,
    pub b_rate: f64,
    pub d_rate: f64,
    pub p_rate: f64,
    pub q_rate: f64,
    #[serde(default)]
    pub consumption: ConsumptionLaw,
}

impl Default for KineticsSpec {
    fn default() -> Self {
        Self {
            lambda: 100.0,
            b_rate: 1.0,
            d_rate: 0.5,
            p_rate: 0.4,
            q_rate: 0.3,
            consumption: ConsumptionLaw::Linear,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateValues {
    pub f_val: f64,
    pub kb: f64,
    pub kd: f64,
    pub kp: f64,
    pub kq: f64,
    pub km: f64,
    pub kn: f64,
    pub f_d: f64,
    pub kb_d: f64,
    pub kd_d: f64,
    pub kp_d: f64,
    pub kq_d: f64,
    pub km_d: f64,
    pub kn_d: f64,
}

impl KineticsSpec {
    pub fn affine(lambda: f64, b_rate: f64, d_rate: f64, p_rate: f64, q_rate: f64) -> Self {
        Self { lambda, b_rate, d_rate, p_rate, q_rate, consumption: ConsumptionLaw::Linear }
    }

    pub fn with_consumption(mut self, law: ConsumptionLaw) -> Self {
        self.consumption = law;
        self
    }

    /// Rejects parameters that break positivity or `b_rate > d_rate`.
    pub fn check(&self) -> Result<(), KineticsError> {
        for (name, value) in [
            ("lambda", self.lambda),
            ("b_rate", self.b_rate),
            ("d_rate", self.d_rate),
            ("p_rate", self.p_rate),
            ("q_rate", self.q_rate),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(KineticsError::Parameter { name, value });
            }
        }
        if self.b_rate <= self.d_rate {
            return Err(KineticsError::BirthDeath { b: self.b_rate, d: self.d_rate });
        }
        Ok(())
    }

    /// Consumption rate and its derivative, evaluated without a domain check
    /// (the nutrient Newton iteration may step slightly outside [0,1]).
    #[inline]
    pub fn consumption(&self, c: f64) -> (f64, f64) {
        match self.consumption {
            ConsumptionLaw::Linear => (self.lambda * c, self.lambda),
            ConsumptionLaw::Saturating => {
                let s = 1.0 + c;
                (self.lambda * c / s, self.lambda / (s * s))
            }
        }
    }

    /// All rates at `c` without the domain check.
    #[inline]
    pub fn rates(&self, c: f64) -> RateValues {
        let (f_val, f_d) = self.consumption(c);
        let kb = self.b_rate * c;
        let kd = self.d_rate * (1.0 - c);
        let kp = self.p_rate * c;
        let kq = self.q_rate * (1.0 - c);
        let (kb_d, kd_d, kp_d, kq_d) = (self.b_rate, -self.d_rate, self.p_rate, -self.q_rate);
        RateValues {
            f_val,
            kb,
            kd,
            kp,
            kq,
            km: kb + kd,
            kn: kp + kq,
            f_d,
            kb_d,
            kd_d,
            kp_d,
            kq_d,
            km_d: kb_d + kd_d,
            kn_d: kp_d + kq_d,
        }
    }

    /// Reaction term `f(c, p) = K_P + (K_M - K_N) p - K_M p^2` without a
    /// domain check.
    #[inline]
    pub fn reaction(&self, c: f64, p: f64) -> f64 {
        let r = self.rates(c);
        r.kp + (r.km - r.kn) * p - r.km * p * p
    }

    /// `(df/dp, df/dc)` of the reaction term.
    #[inline]
    pub fn reaction_partials(&self, c: f64, p: f64) -> (f64, f64) {
        let r = self.rates(c);
        (r.km - r.kn - 2.0 * r.km * p, r.kp_d + (r.km_d - r.kn_d) * p - r.km_d * p * p)
    }

    /// Net volume production density `-K_D(c) + K_M(c) p`.
    #[inline]
    pub fn growth(&self, c: f64, p: f64) -> f64 {
        let r = self.rates(c);
        -r.kd + r.km * p
    }
}

fn check_domain(c: f64) -> Result<(), KineticsError> {
    if !(-DOMAIN_TOL..=1.0 + DOMAIN_TOL).contains(&c) {
        return Err(KineticsError::Domain { c });
    }
    Ok(())
}

pub fn eval_rates(spec: &KineticsSpec, c: f64) -> Result<RateValues, KineticsError> {
    check_domain(c)?;
    Ok(spec.rates(c))
}

pub fn reaction_f(spec: &KineticsSpec, c: f64, p: f64) -> Result<f64, KineticsError> {
    check_domain(c)?;
    Ok(spec.reaction(c, p))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisCheck {
    pub name: &'static str,
    pub passed: bool,
    /// Signed margin at the worst sample; positive when the check holds.
    pub worst_margin: f64,
    pub worst_at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<HypothesisCheck>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

const SAMPLES: usize = 1001;
const ZERO_TOL: f64 = 1e-14;

pub fn validate_hypotheses(spec: &KineticsSpec) -> ValidationReport {
    let cs: Vec<f64> = (0..SAMPLES).map(|i| i as f64 / (SAMPLES - 1) as f64).collect();
    let rates: Vec<RateValues> = cs.iter().map(|&c| spec.rates(c)).collect();

    let positive = |name: &'static str, sel: &dyn Fn(&RateValues) -> f64| {
        let (worst_at, worst_margin) = cs
            .iter()
            .zip(&rates)
            .map(|(&c, r)| (c, sel(r)))
            .fold((0.0, f64::INFINITY), |acc, (c, m)| if m < acc.1 { (c, m) } else { acc });
        HypothesisCheck { name, passed: worst_margin > 0.0, worst_margin, worst_at }
    };
    let vanishes = |name: &'static str, c: f64, value: f64| {
        let margin = ZERO_TOL - value.abs();
        HypothesisCheck { name, passed: margin >= 0.0, worst_margin: margin, worst_at: c }
    };
    let at0 = spec.rates(0.0);
    let at1 = spec.rates(1.0);

    let checks = vec![
        vanishes("F(0)=0", 0.0, at0.f_val),
        positive("F'>0", &|r| r.f_d),
        positive("K_B'>0", &|r| r.kb_d),
        vanishes("K_B(0)=0", 0.0, at0.kb),
        positive("K_D'<0", &|r| -r.kd_d),
        vanishes("K_D(1)=0", 1.0, at1.kd),
        positive("K_P'>0", &|r| r.kp_d),
        vanishes("K_P(0)=0", 0.0, at0.kp),
        positive("K_Q'<0", &|r| -r.kq_d),
        vanishes("K_Q(1)=0", 1.0, at1.kq),
        positive("K_B'+K_D'>0", &|r| r.kb_d + r.kd_d),
    ];
    ValidationReport { checks }
}

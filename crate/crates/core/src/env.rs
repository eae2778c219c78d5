//! Varying environments, pgf compositions, moment tables and the time change.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::jet::Jet;
use crate::law::{OffspringLaw, DEFAULT_MAX_ORDER};
use crate::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    /// law(m) = laws[(m − 1) mod L].
    Cyclic,
    /// law(m) = laws[m − 1]; generations beyond the list are an error.
    Explicit,
    /// law(m) = laws[h(seed, m) mod L] for a fixed integer hash h.
    Parametric,
}

/// Serializable description of an environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub laws: Vec<OffspringLaw>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
}

/// A sequence of offspring laws q_1, q_2, … seen from a generation offset.
#[derive(Clone, Debug)]
pub struct Environment {
    spec: Arc<EnvSpec>,
    offset: usize,
    max_order: usize,
}

impl Environment {
    pub fn new(spec: EnvSpec) -> Result<Self> {
        if spec.laws.is_empty() {
            return Err(Error::InvalidInput("environment needs at least one law".into()));
        }
        for law in &spec.laws {
            law.validate()?;
        }
        Ok(Environment { spec: Arc::new(spec), offset: 0, max_order: DEFAULT_MAX_ORDER })
    }

    pub fn constant(law: OffspringLaw) -> Self {
        Self::cyclic(vec![law]).expect("validated law")
    }

    pub fn cyclic(laws: Vec<OffspringLaw>) -> Result<Self> {
        Self::new(EnvSpec { kind: EnvKind::Cyclic, laws, seed: 0, horizon: None })
    }

    pub fn explicit(laws: Vec<OffspringLaw>) -> Result<Self> {
        let horizon = Some(laws.len());
        Self::new(EnvSpec { kind: EnvKind::Explicit, laws, seed: 0, horizon })
    }

    pub fn parametric(palette: Vec<OffspringLaw>, seed: u64) -> Result<Self> {
        Self::new(EnvSpec { kind: EnvKind::Parametric, laws: palette, seed, horizon: None })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: EnvSpec = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::new(spec)
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    /// Generations already consumed by shifting.
    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn with_max_order(mut self, max_order: usize) -> Self {
        self.max_order = max_order;
        self
    }

    /// e_m: law(j) of the result is law(m + j) of `self`.
    pub fn shifted(&self, m: usize) -> Self {
        Environment { spec: Arc::clone(&self.spec), offset: self.offset + m, max_order: self.max_order }
    }

    /// q_m for m ≥ 1.
    pub fn law(&self, m: usize) -> Result<&OffspringLaw> {
        if m == 0 {
            return Err(domain("generation laws are indexed from 1"));
        }
        let idx = self.offset + m;
        let laws = &self.spec.laws;
        match self.spec.kind {
            EnvKind::Cyclic => Ok(&laws[(idx - 1) % laws.len()]),
            EnvKind::Explicit => laws.get(idx - 1).ok_or_else(|| {
                Error::InvalidInput(format!("explicit environment has {} generations, asked for {idx}", laws.len()))
            }),
            EnvKind::Parametric => {
                let h = splitmix64(self.spec.seed ^ splitmix64(idx as u64));
                Ok(&laws[(h % laws.len() as u64) as usize])
            }
        }
    }

    /// q_1, …, q_n.
    pub fn laws(&self, n: usize) -> Result<Vec<&OffspringLaw>> {
        (1..=n).map(|m| self.law(m)).collect()
    }

    /// True when every law has finite support.
    pub fn finite_support(&self, n: usize) -> Result<bool> {
        Ok(self.laws(n)?.iter().all(|l| l.max_offspring().is_some()))
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// f_{m,n}(s) = f_{m+1} ∘ … ∘ f_n (s).
pub fn compose_pgf<T: Real>(env: &Environment, m: usize, n: usize, s: T) -> Result<T> {
    if m > n {
        return Err(domain(format!("compose_pgf needs m ≤ n, got m={m}, n={n}")));
    }
    if !(s >= T::zero() && s <= T::one()) {
        return Err(domain(format!("argument {s:?} outside [0,1]")));
    }
    let mut x = s;
    for j in (m + 1..=n).rev() {
        x = env.law(j)?.deriv_raw(0, x);
    }
    Ok(x)
}

/// Jet of f_{m,n} at s up to `order`.
pub fn compose_pgf_jet<T: Real>(env: &Environment, m: usize, n: usize, s: T, order: usize) -> Result<Jet<T>> {
    if order > env.max_order() {
        return Err(Error::UnsupportedOrder { order, max: env.max_order() });
    }
    if m > n {
        return Err(domain(format!("compose_pgf_jet needs m ≤ n, got m={m}, n={n}")));
    }
    if !(s >= T::zero() && s <= T::one()) {
        return Err(domain(format!("argument {s:?} outside [0,1]")));
    }
    let mut jet = Jet::identity(s, order);
    for j in (m + 1..=n).rev() {
        jet = jet.compose_law(env.law(j)?);
    }
    Ok(jet)
}

/// Jets of f_{m,n} at s for every m = 0..=n, from one backward sweep.
pub fn jet_sweep<T: Real>(env: &Environment, n: usize, s: T, order: usize) -> Result<Vec<Jet<T>>> {
    if order > env.max_order() {
        return Err(Error::UnsupportedOrder { order, max: env.max_order() });
    }
    let mut out = vec![Jet::identity(s, order)];
    for j in (1..=n).rev() {
        let next = out.last().expect("non-empty").compose_law(env.law(j)?);
        out.push(next);
    }
    out.reverse();
    Ok(out)
}

/// Moment tables μ_m, ν_m, ρ_m, a_m for m = 0..=n.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvSummary {
    n: usize,
    ln_mu: Vec<f64>,
    nu: Vec<f64>,
    rho: Vec<f64>,
    ln_rho: Vec<f64>,
}

/// Relative slack in ρ_m ≤ t ρ_n absorbing summation rounding.
const TIME_CHANGE_SLACK: f64 = 1e-12;

impl EnvSummary {
    pub fn new(env: &Environment, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(domain("env_summary needs n ≥ 1"));
        }
        let mut ln_mu = Vec::with_capacity(n + 1);
        let mut nu = Vec::with_capacity(n + 1);
        let mut rho = Vec::with_capacity(n + 1);
        let mut ln_rho = Vec::with_capacity(n + 1);
        ln_mu.push(0.0);
        nu.push(f64::NAN);
        rho.push(0.0);
        ln_rho.push(f64::NEG_INFINITY);
        // Neumaier-compensated running sum for ρ in linear scale.
        let (mut acc, mut comp) = (0.0f64, 0.0f64);
        for m in 1..=n {
            let law = env.law(m)?;
            let mean = law.mean();
            if !(mean > 0.0) {
                return Err(Error::DegenerateEnvironment(format!("generation {m} has mean {mean}")));
            }
            let nu_m = law.nu();
            // ρ_m = ρ_{m−1} + ν_m / μ_{m−1}
            let ln_term = nu_m.ln() - ln_mu[m - 1];
            let term = ln_term.exp();
            let sum = acc + term;
            comp += if acc.abs() >= term.abs() { (acc - sum) + term } else { (term - sum) + acc };
            acc = sum;
            rho.push(acc + comp);
            ln_rho.push(log_add_exp(ln_rho[m - 1], ln_term));
            nu.push(nu_m);
            ln_mu.push(ln_mu[m - 1] + mean.ln());
        }
        Ok(EnvSummary { n, ln_mu, nu, rho, ln_rho })
    }

    pub fn horizon(&self) -> usize {
        self.n
    }

    pub fn mu(&self, m: usize) -> f64 {
        self.ln_mu[m].exp()
    }

    pub fn ln_mu(&self, m: usize) -> f64 {
        self.ln_mu[m]
    }

    /// ν_m for m ≥ 1.
    pub fn nu(&self, m: usize) -> f64 {
        self.nu[m]
    }

    pub fn rho(&self, m: usize) -> f64 {
        if self.rho[m].is_finite() {
            self.rho[m]
        } else {
            self.ln_rho[m].exp()
        }
    }

    pub fn ln_rho(&self, m: usize) -> f64 {
        self.ln_rho[m]
    }

    /// a_m = μ_m ρ_m / 2 for m ≥ 1, a_0 = 1.
    pub fn a(&self, m: usize) -> f64 {
        self.ln_a(m).exp()
    }

    pub fn ln_a(&self, m: usize) -> f64 {
        if m == 0 {
            0.0
        } else {
            self.ln_mu[m] + self.ln_rho[m] - std::f64::consts::LN_2
        }
    }

    /// ρ_m / ρ_n.
    pub fn rho_ratio(&self, m: usize) -> f64 {
        if m == self.n {
            return 1.0;
        }
        if m == 0 {
            return 0.0;
        }
        if self.rho[self.n].is_finite() && self.rho[self.n] > 0.0 {
            self.rho[m] / self.rho[self.n]
        } else {
            (self.ln_rho[m] - self.ln_rho[self.n]).exp()
        }
    }

    /// A_{n,m} = 1 − ρ_{m+1}/ρ_n for −1 ≤ m ≤ n − 1.
    pub fn big_a(&self, m: isize) -> f64 {
        assert!(m >= -1 && m < self.n as isize, "A_(n,m) needs -1 <= m < n");
        1.0 - self.rho_ratio((m + 1) as usize)
    }

    /// S_n(t) = max{m ≤ n : ρ_m ≤ t ρ_n}.
    pub fn time_change(&self, t: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&t) {
            return Err(domain(format!("time {t} outside [0,1]")));
        }
        if t == 1.0 {
            return Ok(self.n);
        }
        if !(self.rho(self.n) > 0.0) {
            return Err(Error::DegenerateEnvironment("ρ_n = 0: every law up to n has zero variance".into()));
        }
        let bound = t * (1.0 + TIME_CHANGE_SLACK);
        // ρ_m/ρ_n is non-decreasing: count the prefix satisfying the bound.
        let (mut lo, mut hi) = (0usize, self.n + 1);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.rho_ratio(mid) <= bound {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        Ok(lo.saturating_sub(1))
    }
}

/// S_n(t) for `env`.
pub fn time_change(env: &Environment, n: usize, t: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&t) {
        return Err(domain(format!("time {t} outside [0,1]")));
    }
    if n == 0 {
        return Ok(0);
    }
    EnvSummary::new(env, n)?.time_change(t)
}

pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Finite-horizon evidence on the growth of a_n and a_n/μ_n, plus Condition (A).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnostics {
    pub horizon: usize,
    /// a_m for m = 0..=horizon.
    pub a: Vec<f64>,
    /// a_m/μ_m for m = 0..=horizon.
    pub a_over_mu: Vec<f64>,
    /// a_m kept growing over the second half of the horizon.
    pub a_growing: bool,
    pub a_over_mu_growing: bool,
    /// Both sequences growing: the pattern expected of a critical environment.
    pub critical_pattern: bool,
    /// Smallest c with f_m'''(1) ≤ c f_m''(1)(1 + f_m'(1)) for m ≤ horizon.
    pub condition_a_best_c: Option<f64>,
    pub warnings: Vec<String>,
}

/// Growth factor over the second half of the horizon that counts as growth.
const GROWTH_FACTOR: f64 = 1.5;
/// Growth factors below this are read as bounded.
const FLAT_FACTOR: f64 = 1.05;

pub fn classify(env: &Environment, horizon: usize) -> Result<Diagnostics> {
    if horizon < 2 {
        return Err(domain("classify needs horizon ≥ 2"));
    }
    let summary = EnvSummary::new(env, horizon)?;
    let ln_a: Vec<f64> = (0..=horizon).map(|m| summary.ln_a(m)).collect();
    let ln_ratio: Vec<f64> = (0..=horizon).map(|m| summary.ln_a(m) - summary.ln_mu(m)).collect();
    let mut warnings = Vec::new();
    let a_growing = growth_flag("a_n", &ln_a, &mut warnings);
    let a_over_mu_growing = growth_flag("a_n/mu_n", &ln_ratio, &mut warnings);

    let mut best_c: Option<f64> = Some(0.0);
    for m in 1..=horizon {
        let law = env.law(m)?;
        let (f1, f2, f3) = (law.mean(), law.second_factorial_moment(), law.third_factorial_moment());
        if !f3.is_finite() {
            best_c = None;
            break;
        }
        if f3 == 0.0 {
            continue;
        }
        let c = f3 / (f2 * (1.0 + f1));
        best_c = best_c.map(|b| b.max(c));
    }
    if best_c.is_none() {
        warnings.push("third factorial moment unavailable; Condition (A) unchecked".into());
    }
    Ok(Diagnostics {
        horizon,
        a: ln_a.iter().map(|x| x.exp()).collect(),
        a_over_mu: ln_ratio.iter().map(|x| x.exp()).collect(),
        a_growing,
        a_over_mu_growing,
        critical_pattern: a_growing && a_over_mu_growing,
        condition_a_best_c: best_c,
        warnings,
    })
}

fn growth_flag(name: &str, ln_series: &[f64], warnings: &mut Vec<String>) -> bool {
    let h = ln_series.len() - 1;
    let half = h / 2;
    let tail = &ln_series[half.max(1)..];
    let decreasing_steps = tail.windows(2).filter(|w| w[1] < w[0] - 1e-12).count();
    let monotone = decreasing_steps * 10 <= tail.len();
    let factor = (ln_series[h] - ln_series[half.max(1)]).exp();
    if factor >= GROWTH_FACTOR && monotone {
        return true;
    }
    if factor > FLAT_FACTOR {
        warnings.push(format!("{name}: growth factor {factor:.3} over the second half is inconclusive"));
    }
    false
}

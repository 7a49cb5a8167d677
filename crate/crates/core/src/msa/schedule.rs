//! Scale schedules `(N_s, log δ_s, α_s, α'_s)`.
//!
//! Everything is kept in natural-log form. In asymptotic mode `N_s` overflows any
//! integer type by the second scale, so only `log N_s` is stored beyond that.

use serde::{Deserialize, Serialize};

use super::MsaError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleMode {
    Asymptotic,
    Desk,
}

/// Tunables of the desk schedule and its block geometry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeskOverrides {
    /// `N₀`.
    pub n0: u64,
    /// `N₁`; defaults to `max(2, ⌊e^{|log δ₀|^{1/ρ'}}⌋)`.
    pub n1: Option<u64>,
    /// `g_N` in `N_{s+1} = ⌈N_s^{g_N}⌉`, within `(1, 3]`.
    pub growth_n: f64,
    /// `g_δ` in `log δ_{s+1} = g_δ log δ_s`, within `[2, 50]`.
    pub decay_delta: f64,
    /// Constant `c` replacing `50·10^{5ρ'}` in the decay-rate recursion.
    pub alpha_loss: f64,
    /// Exponent `e` of the wide threshold `δ_s^e` defining `Q̃_s`.
    pub tilde_exponent: f64,
    /// `Ω̃` radius as a multiple of the `Ω` radius.
    pub tilde_factor: f64,
    /// Case separation radius as a multiple of `N_{s+1}`.
    pub separation_factor: f64,
    /// Root-search window radius `δ_{s−1}^w` before clipping at poles.
    pub theta_window_exponent: f64,
}

impl Default for DeskOverrides {
    fn default() -> Self {
        DeskOverrides {
            n0: 8,
            n1: None,
            growth_n: 1.5,
            decay_delta: 3.0,
            alpha_loss: 0.5,
            tilde_exponent: 0.5,
            tilde_factor: 3.0,
            separation_factor: 2.0,
            theta_window_exponent: 0.5,
        }
    }
}

impl DeskOverrides {
    pub fn validate(&self) -> Result<(), MsaError> {
        let bad = |what: &str| Err(MsaError::InvalidSchedule(what.to_string()));
        if self.n0 < 1 || self.n1 == Some(0) {
            return bad("N₀ and N₁ must be at least 1");
        }
        if !(self.growth_n > 1.0 && self.growth_n <= 3.0) {
            return bad("g_N must lie in (1, 3]");
        }
        if !(2.0..=50.0).contains(&self.decay_delta) {
            return bad("g_δ must lie in [2, 50]");
        }
        if !(self.alpha_loss >= 0.0) {
            return bad("alpha_loss must be nonnegative");
        }
        if !(self.tilde_exponent > 0.0 && self.tilde_exponent < 1.0) {
            return bad("tilde_exponent must lie in (0, 1)");
        }
        if !(self.tilde_factor > 2.0) {
            return bad("tilde_factor must exceed 2 so that 2Ω ⊊ Ω̃");
        }
        if !(self.separation_factor >= 1.0) {
            return bad("separation_factor must be at least 1");
        }
        if !(self.theta_window_exponent > 0.0) {
            return bad("theta_window_exponent must be positive");
        }
        Ok(())
    }
}

/// One scale of a schedule.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Scale {
    pub s: usize,
    /// `N_s` when it fits in a `u64`.
    pub n: Option<u64>,
    pub log_n: f64,
    pub log_delta: f64,
    pub alpha: f64,
    /// `α'_{s−1}`, attached to scale `s ≥ 1`.
    pub alpha_prime: Option<f64>,
}

impl Scale {
    pub fn delta(&self) -> f64 {
        self.log_delta.exp()
    }

    /// `N_s` as a float, `+∞` when it overflows.
    pub fn n_f64(&self) -> f64 {
        self.n.map(|n| n as f64).unwrap_or(f64::INFINITY)
    }
}

/// Outcome of the asymptotic-mode sandwich identities at scale `s`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SandwichCheck {
    pub s: usize,
    /// `N_s^{10⁵} − 1 ≤ N_{s+1} ≤ (N_s + 1)^{10⁵}`, checked for `s ≥ 1`.
    pub growth: Option<bool>,
    /// `e^{−log^{ρ'}(N_{s+1}+1)} ≤ δ_s ≤ e^{−log^{ρ'} N_{s+1}}`.
    pub delta: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScaleSchedule {
    pub mode: ScheduleMode,
    pub rho_prime: f64,
    pub alpha: f64,
    pub rho: f64,
    pub s_max: usize,
    /// Scales `0..=s_max + 1`.
    pub scales: Vec<Scale>,
    pub overrides: Option<DeskOverrides>,
    pub sandwiches: Vec<SandwichCheck>,
    /// Every factor of the decay-rate recursion is positive and `α_∞ ≥ α/2`.
    pub alpha_admissible: bool,
    pub warnings: Vec<String>,
}

/// Relative slack for log-domain comparisons that are equalities in exact arithmetic.
pub const LOG_SLACK: f64 = 1e-12;

/// Inputs to [`build_schedule`].
#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleSpec {
    pub mode: ScheduleMode,
    /// `log δ₀`; in asymptotic mode usually `(1/10) log ε₀`.
    pub log_delta0: f64,
    pub rho_prime: f64,
    pub alpha: f64,
    pub rho: f64,
    pub s_max: usize,
    pub overrides: DeskOverrides,
}

impl ScheduleSpec {
    pub fn asymptotic_from_epsilon0(epsilon0: f64, rho_prime: f64, alpha: f64, rho: f64, s_max: usize) -> Self {
        ScheduleSpec {
            mode: ScheduleMode::Asymptotic,
            log_delta0: epsilon0.ln() / 10.0,
            rho_prime,
            alpha,
            rho,
            s_max,
            overrides: DeskOverrides::default(),
        }
    }

    pub fn desk(log_delta0: f64, rho_prime: f64, alpha: f64, rho: f64, s_max: usize, overrides: DeskOverrides) -> Self {
        ScheduleSpec { mode: ScheduleMode::Desk, log_delta0, rho_prime, alpha, rho, s_max, overrides }
    }
}

fn le_slack(a: f64, b: f64) -> bool {
    a <= b + LOG_SLACK * a.abs().max(b.abs())
}

fn int_if_small(log_n: f64) -> Option<u64> {
    (log_n < 43.0).then(|| log_n.exp().round() as u64)
}

pub fn build_schedule(spec: &ScheduleSpec) -> Result<ScaleSchedule, MsaError> {
    if !(spec.rho_prime > 1.0) {
        return Err(MsaError::InvalidSchedule(format!("ρ' must exceed 1, got {}", spec.rho_prime)));
    }
    if !(spec.log_delta0 < 0.0) || !spec.log_delta0.is_finite() {
        return Err(MsaError::InvalidSchedule(format!("log δ₀ must be negative and finite, got {}", spec.log_delta0)));
    }
    if !(spec.alpha > 0.0) || !(spec.rho > spec.rho_prime) {
        return Err(MsaError::InvalidSchedule("need α > 0 and ρ > ρ'".into()));
    }
    let count = spec.s_max + 2;
    let mut log_delta = Vec::with_capacity(count);
    let mut n: Vec<Option<u64>> = Vec::with_capacity(count);
    let mut log_n = Vec::with_capacity(count);
    let mut warnings = Vec::new();
    match spec.mode {
        ScheduleMode::Asymptotic => {
            let ratio = 10f64.powf(5.0 * spec.rho_prime);
            let base = spec.log_delta0.abs().powf(1.0 / spec.rho_prime);
            n.push(Some(1));
            log_n.push(0.0);
            for s in 0..count {
                let ld = spec.log_delta0 * ratio.powi(s as i32);
                if !ld.is_finite() {
                    return Err(MsaError::ScheduleOverflow { s });
                }
                log_delta.push(ld);
                if s + 1 < count {
                    // x_s = |log δ_s|^{1/ρ'} = 10^{5s} |log δ₀|^{1/ρ'}
                    let x = base * 1e5f64.powi(s as i32);
                    if !x.is_finite() {
                        return Err(MsaError::ScheduleOverflow { s: s + 1 });
                    }
                    if x < 43.0 {
                        let v = x.exp().floor() as u64;
                        n.push(Some(v));
                        log_n.push((v as f64).ln());
                    } else {
                        n.push(None);
                        log_n.push(x);
                    }
                }
            }
            if spec.s_max >= 2 {
                warnings.push("asymptotic mode is meant for schedule arithmetic and s ≤ 1 structures only".to_string());
            }
        }
        ScheduleMode::Desk => {
            let o = &spec.overrides;
            o.validate()?;
            let first = o.n1.unwrap_or_else(|| (spec.log_delta0.abs().powf(1.0 / spec.rho_prime).exp().floor() as u64).max(2));
            let mut cur = o.n0 as f64;
            let mut ld = spec.log_delta0;
            for s in 0..count {
                if !cur.is_finite() || !ld.is_finite() {
                    return Err(MsaError::ScheduleOverflow { s });
                }
                n.push((cur < 9.0e15).then_some(cur as u64));
                log_n.push(cur.ln());
                log_delta.push(ld);
                cur = if s == 0 { first as f64 } else { cur.powf(o.growth_n).ceil() };
                ld *= o.decay_delta;
            }
        }
    }

    let loss = match spec.mode {
        ScheduleMode::Asymptotic => (50.0 * 10f64.powf(5.0 * spec.rho_prime), 20.0 * 10f64.powf(5.0 * spec.rho_prime)),
        ScheduleMode::Desk => (spec.overrides.alpha_loss, 0.4 * spec.overrides.alpha_loss),
    };
    let mut scales = Vec::with_capacity(count);
    let mut alpha_admissible = true;
    let mut prev_alpha = 0.75 * spec.alpha;
    for s in 0..count {
        let (alpha, alpha_prime) = if s == 0 {
            (prev_alpha, None)
        } else {
            let denom = spec.alpha * log_n[s].powf(spec.rho - spec.rho_prime);
            let f = 1.0 - loss.0 / denom;
            let fp = 1.0 - loss.1 / denom;
            if !(f > 0.0) {
                alpha_admissible = false;
            }
            (prev_alpha * f, Some(prev_alpha * fp))
        };
        prev_alpha = alpha;
        scales.push(Scale { s, n: n[s].or_else(|| int_if_small(log_n[s])), log_n: log_n[s], log_delta: log_delta[s], alpha, alpha_prime });
    }
    if scales.iter().any(|sc| sc.alpha < spec.alpha / 2.0) {
        alpha_admissible = false;
    }
    if !alpha_admissible {
        warnings.push("decay-rate recursion leaves [α/2, 3α/4]; N₁ is below the admissibility threshold".to_string());
    }

    let sandwiches = match spec.mode {
        ScheduleMode::Asymptotic => (0..=spec.s_max).map(|s| asymptotic_sandwich(&scales, s, spec.rho_prime)).collect(),
        ScheduleMode::Desk => Vec::new(),
    };
    Ok(ScaleSchedule {
        mode: spec.mode,
        rho_prime: spec.rho_prime,
        alpha: spec.alpha,
        rho: spec.rho,
        s_max: spec.s_max,
        scales,
        overrides: (spec.mode == ScheduleMode::Desk).then(|| spec.overrides.clone()),
        sandwiches,
        alpha_admissible,
        warnings,
    })
}

/// `log(N + 1)` from an exact integer or, past `u64`, from `log N`.
fn log_n_plus_one(sc: &Scale) -> f64 {
    match sc.n {
        Some(v) => (v as f64).ln_1p(),
        None => sc.log_n,
    }
}

fn asymptotic_sandwich(scales: &[Scale], s: usize, rho_prime: f64) -> SandwichCheck {
    let next = &scales[s + 1];
    let growth = (s >= 1).then(|| {
        let cur = &scales[s];
        // N_s^{10⁵} − 1 ≤ N_{s+1}  ⟺  10⁵ log N_s ≤ log(N_{s+1} + 1)
        let lower = le_slack(1e5 * cur.log_n, log_n_plus_one(next));
        let upper = le_slack(next.log_n, 1e5 * log_n_plus_one(cur));
        lower && upper
    });
    let ld = scales[s].log_delta;
    let delta = le_slack(-log_n_plus_one(next).powf(rho_prime), ld) && le_slack(ld, -next.log_n.powf(rho_prime));
    SandwichCheck { s, growth, delta }
}

impl ScaleSchedule {
    pub fn scale(&self, s: usize) -> &Scale {
        &self.scales[s]
    }

    pub fn log_delta(&self, s: usize) -> f64 {
        self.scales[s].log_delta
    }

    pub fn sandwiches_hold(&self) -> bool {
        self.sandwiches.iter().all(|c| c.delta && c.growth.unwrap_or(true))
    }

    fn desk(&self) -> DeskOverrides {
        self.overrides.clone().unwrap_or_default()
    }

    /// `log` of the wide threshold defining `Q̃_s`.
    pub fn log_tilde_threshold(&self, s: usize) -> f64 {
        let e = match self.mode {
            ScheduleMode::Asymptotic => 0.01,
            ScheduleMode::Desk => self.desk().tilde_exponent,
        };
        e * self.log_delta(s)
    }

    /// Radius below which `Q̃_{s}^−` and `Q_{s}^+` count as close (case (C2)).
    pub fn separation_radius(&self, s: usize) -> f64 {
        let next = &self.scales[(s + 1).min(self.scales.len() - 1)];
        match self.mode {
            ScheduleMode::Asymptotic => 100.0 * (10.0 * next.log_n).exp(),
            ScheduleMode::Desk => self.desk().separation_factor * next.n_f64(),
        }
    }

    /// Radii of `(Ω, 2Ω, Ω̃)` at scale `s ≥ 1` for the given case.
    pub fn block_radii(&self, s: usize, case: Case) -> [f64; 3] {
        let sc = &self.scales[s];
        match self.mode {
            ScheduleMode::Asymptotic => {
                let n = sc.n_f64();
                match case {
                    Case::C1 => [n, 2.0 * n, n.powi(10)],
                    Case::C2 => [100.0 * n.powi(10), 200.0 * n.powi(10), n.powi(100)],
                }
            }
            ScheduleMode::Desk => {
                let o = self.desk();
                let base = match case {
                    Case::C1 => sc.n_f64(),
                    Case::C2 => self.separation_radius(s - 1),
                };
                [base, 2.0 * base, o.tilde_factor * base]
            }
        }
    }

    /// Exponent `w` of the root window `δ^w`.
    pub fn theta_window_exponent(&self) -> f64 {
        match self.mode {
            ScheduleMode::Asymptotic => 1e-4,
            ScheduleMode::Desk => self.desk().theta_window_exponent,
        }
    }
}

/// Case flag of the resonance dichotomy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Case {
    C1,
    C2,
}

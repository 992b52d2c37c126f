//! Compartment state, rate parameters and the pointwise reaction terms.
//!
//! The seven live compartments are S (susceptible), Q (quarantined),
//! E (exposed), A (asymptomatic), I (symptomatic), D (hospitalized) and
//! R (recovered). Deaths from I and D are routed into two cumulative ledger
//! slots so that the nine-slot total is exactly conserved by the reaction
//! terms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Storage slot of a [`NodeState`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Compartment {
    S,
    Q,
    E,
    A,
    I,
    D,
    R,
    CumDeathI,
    CumDeathD,
}

impl Compartment {
    pub const ALL: [Compartment; 9] = [
        Compartment::S,
        Compartment::Q,
        Compartment::E,
        Compartment::A,
        Compartment::I,
        Compartment::D,
        Compartment::R,
        Compartment::CumDeathI,
        Compartment::CumDeathD,
    ];

    /// The seven population compartments, ledgers excluded.
    pub const LIVE: [Compartment; 7] = [
        Compartment::S,
        Compartment::Q,
        Compartment::E,
        Compartment::A,
        Compartment::I,
        Compartment::D,
        Compartment::R,
    ];

    /// Compartments that carry a diffusion term.
    pub const DIFFUSING: [Compartment; 4] =
        [Compartment::S, Compartment::E, Compartment::A, Compartment::I];

    pub const COUNT: usize = 9;
    pub const LIVE_COUNT: usize = 7;

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Column name used in CSV output and diagnostics.
    pub fn name(self) -> &'static str {
        match self {
            Compartment::S => "S",
            Compartment::Q => "Q",
            Compartment::E => "E",
            Compartment::A => "A",
            Compartment::I => "I",
            Compartment::D => "D",
            Compartment::R => "R",
            Compartment::CumDeathI => "cum_death_i",
            Compartment::CumDeathD => "cum_death_d",
        }
    }

    pub fn is_live(self) -> bool {
        self.index() < Self::LIVE_COUNT
    }
}

impl std::fmt::Display for Compartment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Densities of all compartments at one node, plus the death ledgers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NodeState<T> {
    pub s: T,
    pub q: T,
    pub e: T,
    pub a: T,
    pub i: T,
    pub d: T,
    pub r: T,
    pub cum_death_i: T,
    pub cum_death_d: T,
}

impl<T: Scalar> NodeState<T> {
    pub fn zero() -> Self {
        Self::from_array([T::zero(); 9])
    }

    pub fn from_array(v: [T; 9]) -> Self {
        Self {
            s: v[0],
            q: v[1],
            e: v[2],
            a: v[3],
            i: v[4],
            d: v[5],
            r: v[6],
            cum_death_i: v[7],
            cum_death_d: v[8],
        }
    }

    pub fn to_array(&self) -> [T; 9] {
        [
            self.s,
            self.q,
            self.e,
            self.a,
            self.i,
            self.d,
            self.r,
            self.cum_death_i,
            self.cum_death_d,
        ]
    }

    pub fn get(&self, c: Compartment) -> T {
        self.to_array()[c.index()]
    }

    pub fn set(&mut self, c: Compartment, v: T) {
        let mut arr = self.to_array();
        arr[c.index()] = v;
        *self = Self::from_array(arr);
    }

    /// Sum of all nine slots.
    pub fn augmented_total(&self) -> T {
        self.to_array().iter().fold(T::zero(), |acc, &v| acc + v)
    }

    /// Rejects the state if any slot is NaN or infinite.
    pub fn check_finite(&self) -> Result<()> {
        for c in Compartment::ALL {
            if !self.get(c).is_finite() {
                return Err(Error::NonFinite {
                    field: c.name().to_string(),
                    node: None,
                });
            }
        }
        Ok(())
    }
}

/// Rate constants and diffusivities of the seven-compartment model.
///
/// Rates are per day. The incidence is the mass-action term
/// `theta * S * (I + b * A)` without normalization by the total population,
/// so `theta` absorbs the density scale of the scenario.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams<T> {
    /// Transmission rate.
    pub theta: T,
    /// Infectiousness discount of asymptomatic carriers.
    pub b: T,
    /// Quarantine entry rate S -> Q.
    pub c: T,
    /// Quarantine release rate Q -> S.
    pub delta: T,
    /// Progression rate out of E.
    pub epsilon: T,
    /// Fraction of E progressing to I (the rest go to A).
    pub frac_sympt: T,
    /// A -> D.
    pub g: T,
    /// A -> R.
    pub beta_rec: T,
    /// I -> R.
    pub j_rec: T,
    /// Death rate of I.
    pub l_death: T,
    /// I -> D.
    pub h1: T,
    /// Death rate of D.
    pub m_death: T,
    /// D -> R.
    pub mu: T,
    pub nu_s: T,
    pub nu_e: T,
    pub nu_a: T,
    pub nu_i: T,
}

impl<T: Scalar> ModelParams<T> {
    fn named(&self) -> [(&'static str, T); 17] {
        [
            ("theta", self.theta),
            ("b", self.b),
            ("c", self.c),
            ("delta", self.delta),
            ("epsilon", self.epsilon),
            ("frac_sympt", self.frac_sympt),
            ("g", self.g),
            ("beta_rec", self.beta_rec),
            ("j_rec", self.j_rec),
            ("l_death", self.l_death),
            ("h1", self.h1),
            ("m_death", self.m_death),
            ("mu", self.mu),
            ("nu_s", self.nu_s),
            ("nu_e", self.nu_e),
            ("nu_a", self.nu_a),
            ("nu_i", self.nu_i),
        ]
    }

    /// Every parameter must be finite and lie in `[0, 1]`. Returns one
    /// message per offending field.
    pub fn diagnostics(&self, prefix: &str) -> Vec<crate::error::Diagnostic> {
        self.named()
            .iter()
            .filter(|(_, v)| !(v.is_finite() && *v >= T::zero() && *v <= T::one()))
            .map(|(name, v)| {
                crate::error::Diagnostic::new(
                    format!("{prefix}{name}"),
                    format!("must lie in [0, 1], got {v}"),
                )
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let diags = self.diagnostics("params.");
        if diags.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(diags))
        }
    }

    /// Diffusivity of a compartment; zero for the non-diffusing ones.
    pub fn diffusivity(&self, c: Compartment) -> T {
        match c {
            Compartment::S => self.nu_s,
            Compartment::E => self.nu_e,
            Compartment::A => self.nu_a,
            Compartment::I => self.nu_i,
            _ => T::zero(),
        }
    }

    pub fn max_diffusivity(&self) -> T {
        Compartment::DIFFUSING
            .iter()
            .map(|&c| self.diffusivity(c))
            .fold(T::zero(), T::max)
    }

    pub fn has_diffusion(&self) -> bool {
        self.max_diffusivity() > T::zero()
    }

    /// Same rates with all diffusivities set to zero.
    pub fn without_diffusion(mut self) -> Self {
        self.nu_s = T::zero();
        self.nu_e = T::zero();
        self.nu_a = T::zero();
        self.nu_i = T::zero();
        self
    }
}

/// Reaction terms without validation; used on the integrator hot path.
#[inline]
pub(crate) fn reaction_terms<T: Scalar>(x: &NodeState<T>, p: &ModelParams<T>) -> NodeState<T> {
    let incidence = p.theta * x.s * (x.i + p.b * x.a);
    let quarantine_in = p.c * x.s;
    let quarantine_out = p.delta * x.q;
    let e_out = p.epsilon * x.e;
    let e_to_i = p.epsilon * p.frac_sympt * x.e;
    let e_to_a = e_out - e_to_i;
    let a_to_d = p.g * x.a;
    let a_to_r = p.beta_rec * x.a;
    let i_to_r = p.j_rec * x.i;
    let i_death = p.l_death * x.i;
    let i_to_d = p.h1 * x.i;
    let d_death = p.m_death * x.d;
    let d_to_r = p.mu * x.d;

    NodeState {
        s: -incidence - quarantine_in + quarantine_out,
        q: quarantine_in - quarantine_out,
        e: incidence - e_out,
        a: e_to_a - a_to_d - a_to_r,
        i: e_to_i - i_to_r - i_death - i_to_d,
        d: a_to_d + i_to_d - d_death - d_to_r,
        r: a_to_r + i_to_r + d_to_r,
        cum_death_i: i_death,
        cum_death_d: d_death,
    }
}

/// Time derivative of the reaction (non-spatial) part of the model at one node.
///
/// The nine components sum to zero: every flow is an internal transfer and
/// the two death outflows land in the ledger slots.
pub fn reaction_rhs<T: Scalar>(state: &NodeState<T>, params: &ModelParams<T>) -> Result<NodeState<T>> {
    state.check_finite()?;
    for (name, v) in params.named() {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                field: format!("params.{name}"),
                node: None,
            });
        }
    }
    Ok(reaction_terms(state, params))
}

/// Sum of the seven live compartments (ledgers excluded).
#[inline]
pub fn total_population<T: Scalar>(state: &NodeState<T>) -> T {
    state.s + state.q + state.e + state.a + state.i + state.d + state.r
}

/// Classic three-compartment state.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SirState<T> {
    pub s: T,
    pub i: T,
    pub r: T,
}

/// Classic SIR rates. `beta` here is the transmission rate and is unrelated
/// to [`ModelParams::beta_rec`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SirParams<T> {
    pub beta: T,
    pub gamma: T,
}

impl<T: Scalar> SirParams<T> {
    pub fn diagnostics(&self, prefix: &str) -> Vec<crate::error::Diagnostic> {
        [("beta", self.beta), ("gamma", self.gamma)]
            .iter()
            .filter(|(_, v)| !(v.is_finite() && *v >= T::zero()))
            .map(|(name, v)| {
                crate::error::Diagnostic::new(
                    format!("{prefix}{name}"),
                    format!("must be finite and nonnegative, got {v}"),
                )
            })
            .collect()
    }
}

#[inline]
pub(crate) fn sir_terms<T: Scalar>(x: &SirState<T>, p: &SirParams<T>) -> SirState<T> {
    let incidence = p.beta * x.s * x.i;
    let recovery = p.gamma * x.i;
    SirState {
        s: -incidence,
        i: incidence - recovery,
        r: recovery,
    }
}

/// `dS = -beta S I`, `dI = beta S I - gamma I`, `dR = gamma I`.
pub fn sir_rhs<T: Scalar>(state: &SirState<T>, params: &SirParams<T>) -> Result<SirState<T>> {
    for (name, v) in [
        ("s", state.s),
        ("i", state.i),
        ("r", state.r),
        ("beta", params.beta),
        ("gamma", params.gamma),
    ] {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                field: name.to_string(),
                node: None,
            });
        }
    }
    Ok(sir_terms(state, params))
}

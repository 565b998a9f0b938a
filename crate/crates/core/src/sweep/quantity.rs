use std::fmt;
use std::str::FromStr;

use crate::analytic::{self, MeterConfig, PpsConfig, SpinState, WeakValueMode};
use crate::error::{Channel, DsaError, Result};

/// Grid parameters a sweep can vary or fix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Param {
    B,
    Theta,
    G,
    Sigma,
    BetaBias,
    N,
}

impl Param {
    pub const ALL: [Param; 6] = [Param::B, Param::Theta, Param::G, Param::Sigma, Param::BetaBias, Param::N];

    pub fn name(&self) -> &'static str {
        match self {
            Param::B => "B",
            Param::Theta => "theta",
            Param::G => "g",
            Param::Sigma => "sigma",
            Param::BetaBias => "beta_bias",
            Param::N => "N",
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Param {
    type Err = DsaError;

    fn from_str(s: &str) -> Result<Self> {
        Param::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| DsaError::InvalidSweep(format!("unknown parameter `{s}`")))
    }
}

macro_rules! quantities {
    ($($variant:ident => $name:literal),* $(,)?) => {
        /// Every quantity a sweep can tabulate.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
        pub enum Quantity { $($variant),* }

        impl Quantity {
            pub const ALL: &'static [Quantity] = &[$(Quantity::$variant),*];

            pub fn name(&self) -> &'static str {
                match self { $(Quantity::$variant => $name),* }
            }
        }
    };
}

quantities! {
    PF => "p_f",
    PFbar => "p_fbar",
    Eta => "eta",
    Beta1 => "beta1",
    Beta2 => "beta2",
    XF => "x_f",
    XFbar => "x_fbar",
    XFOverD => "x_f_over_d",
    XFbarOverD => "x_fbar_over_d",
    Xbar => "xbar",
    XbarOverD => "xbar_over_d",
    Var1 => "var1",
    Var2 => "var2",
    Var1OverD2 => "var1_over_d2",
    Var2OverD2 => "var2_over_d2",
    DsaVariance => "dsa_variance",
    Snr => "snr",
    ReducedSnr => "reduced_snr",
    SnrRatioRoute => "snr_ratio_route",
    ReducedSnrRatioRoute => "reduced_snr_ratio_route",
    BdsaXbar => "bdsa_xbar",
    BdsaXbarApprox => "bdsa_xbar_approx",
    BdsaAbsXbarOverD => "bdsa_abs_xbar_over_d",
    BdsaVariance => "bdsa_variance",
    BdsaVarianceApprox => "bdsa_variance_approx",
    BdsaSnr => "bdsa_snr",
    BdsaSnrExact => "bdsa_snr_exact",
    BdsaReducedSnr => "bdsa_reduced_snr",
    WeakValueClassical => "weak_value_classical",
    McXbar => "mc_xbar",
    McXbarSe => "mc_xbar_se",
    McDHat => "mc_d_hat",
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Quantity {
    type Err = DsaError;

    fn from_str(s: &str) -> Result<Self> {
        Quantity::ALL
            .iter()
            .copied()
            .find(|q| q.name() == s)
            .ok_or_else(|| DsaError::UnknownQuantity(s.to_string()))
    }
}

impl Quantity {
    /// Parameters the quantity reads, besides `B` and `theta` which every quantity needs.
    pub(crate) fn needs(&self) -> &'static [Param] {
        use Quantity::*;
        match self {
            PF | PFbar | Eta | Beta1 | Beta2 | XFOverD | XFbarOverD | XbarOverD | WeakValueClassical => &[],
            XF | XFbar | Xbar | Var1 | Var2 | Var1OverD2 | Var2OverD2 | ReducedSnr => &[Param::G],
            DsaVariance | Snr | SnrRatioRoute | ReducedSnrRatioRoute => &[Param::G, Param::N],
            BdsaXbar | BdsaXbarApprox | BdsaAbsXbarOverD | BdsaReducedSnr => &[Param::G, Param::BetaBias],
            BdsaVariance | BdsaVarianceApprox | BdsaSnr | BdsaSnrExact => &[Param::G, Param::BetaBias, Param::N],
            McXbar | McXbarSe | McDHat => &[Param::G],
        }
    }

    pub(crate) fn is_monte_carlo(&self) -> bool {
        matches!(self, Quantity::McXbar | Quantity::McXbarSe | Quantity::McDHat)
    }
}

/// Resolved inputs at one grid point.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Point {
    pub pps: PpsConfig,
    pub meter: Option<MeterConfig>,
    pub beta: Option<f64>,
    pub n: Option<u64>,
}

impl Point {
    fn meter(&self) -> Result<MeterConfig> {
        self.meter.ok_or_else(|| DsaError::InvalidSweep("missing parameter g".into()))
    }

    fn beta(&self) -> Result<f64> {
        self.beta.ok_or_else(|| DsaError::InvalidSweep("missing parameter beta_bias".into()))
    }

    fn n(&self) -> Result<u64> {
        self.n.ok_or_else(|| DsaError::InvalidSweep("missing parameter N".into()))
    }
}

/// Closed-form quantities at one point (Monte Carlo ones are handled by the runner).
pub(crate) fn evaluate(q: Quantity, pt: &Point) -> Result<f64> {
    use Quantity::*;
    let pps = &pt.pps;
    Ok(match q {
        PF => analytic::postselection_probs(pps).0,
        PFbar => analytic::postselection_probs(pps).1,
        Eta => analytic::eta(pps)?,
        Beta1 => analytic::ratio_factors(pps)?.0,
        Beta2 => analytic::ratio_factors(pps)?.1,
        XF => analytic::psa_psr_means(pps, &pt.meter()?)?.0,
        XFbar => analytic::psa_psr_means(pps, &pt.meter()?)?.1,
        XFOverD => analytic::psa_psr_means_per_d(pps)?.0,
        XFbarOverD => analytic::psa_psr_means_per_d(pps)?.1,
        Xbar => analytic::dsa_signal(pps, &pt.meter()?)?,
        XbarOverD => analytic::dsa_signal(pps, &MeterConfig::new(1.0, 1.0)?)?,
        Var1 => analytic::subensemble_variances(pps, &pt.meter()?)?.0,
        Var2 => analytic::subensemble_variances(pps, &pt.meter()?)?.1,
        Var1OverD2 => analytic::channel_variance_over_d2(pps, &pt.meter()?, Channel::Psa)?,
        Var2OverD2 => analytic::channel_variance_over_d2(pps, &pt.meter()?, Channel::Psr)?,
        DsaVariance => analytic::dsa_variance(pps, &pt.meter()?, pt.n()?)?,
        Snr => analytic::dsa_snr(pps, &pt.meter()?, pt.n()?)?.snr,
        ReducedSnr => analytic::dsa_snr(pps, &pt.meter()?, 1)?.reduced,
        SnrRatioRoute => analytic::dsa_snr_ratio_route(pps, &pt.meter()?, pt.n()?)?,
        ReducedSnrRatioRoute => {
            let (meter, n) = (pt.meter()?, pt.n()?);
            analytic::dsa_snr_ratio_route(pps, &meter, n)? / analytic::conventional_snr(&meter, n)?
        }
        BdsaXbar => analytic::bdsa_signal(pps, &pt.meter()?, pt.beta()?)?.exact,
        BdsaXbarApprox => analytic::bdsa_signal(pps, &pt.meter()?, pt.beta()?)?.approx,
        BdsaAbsXbarOverD => analytic::bdsa_signal(pps, &MeterConfig::new(1.0, 1.0)?, pt.beta()?)?.exact.abs(),
        BdsaVariance => analytic::bdsa_variance_snr(pps, &pt.meter()?, pt.beta()?, pt.n()?)?.variance,
        BdsaVarianceApprox => analytic::bdsa_variance_snr(pps, &pt.meter()?, pt.beta()?, pt.n()?)?.variance_approx,
        BdsaSnr => analytic::bdsa_variance_snr(pps, &pt.meter()?, pt.beta()?, pt.n()?)?.snr,
        BdsaSnrExact => analytic::bdsa_variance_snr(pps, &pt.meter()?, pt.beta()?, pt.n()?)?.snr_exact,
        BdsaReducedSnr => analytic::bdsa_reduced_snr(pps, &pt.meter()?, pt.beta()?)?,
        WeakValueClassical => analytic::weak_value(
            SpinState::Weights { up: pps.alpha2(), down: pps.beta2() },
            SpinState::Weights { up: pps.a2(), down: pps.b2() },
            WeakValueMode::Classical,
        )?,
        McXbar | McXbarSe | McDHat => {
            return Err(DsaError::InvalidSweep(format!("{q} needs a Monte Carlo overlay")));
        }
    })
}

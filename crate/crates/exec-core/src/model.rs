//! Market model primitives: depth function, order-size distributions, the
//! regime-switching order-flow model, and beliefs over regimes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative probability mass a truncated size distribution may leave beyond
/// its cutoff before construction is rejected.
const TRUNCATION_TOL: f64 = 1e-10;

/// Power-law depth function `F(a) = coefficient · a^gamma`.
///
/// `F(a)` is the cost of executing a block of `a` units at once: strictly
/// convex (`gamma > 1`), so splitting a block across several trades is
/// always cheaper. The same function prices the forced liquidation of any
/// leftover inventory at the deadline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthFunction {
    coefficient: f64,
    gamma: f64,
}

impl DepthFunction {
    /// Create a depth function. Requires `coefficient > 0` and `gamma > 1`
    /// (finite); anything else is a domain error.
    pub fn new(coefficient: f64, gamma: f64) -> Result<Self> {
        if !(coefficient.is_finite() && coefficient > 0.0) {
            return Err(Error::Domain(format!(
                "depth coefficient must be positive and finite, got {coefficient}"
            )));
        }
        if !(gamma.is_finite() && gamma > 1.0) {
            return Err(Error::Domain(format!(
                "depth exponent must be finite and exceed 1, got {gamma}"
            )));
        }
        Ok(Self { coefficient, gamma })
    }

    /// The quadratic book `F(a) = a²/2`, the standard demo choice.
    pub fn quadratic() -> Self {
        Self {
            coefficient: 0.5,
            gamma: 2.0,
        }
    }

    /// Evaluate `F(a)` for real `a ≥ 0`; negative `a` is a domain error.
    pub fn eval(&self, a: f64) -> Result<f64> {
        if !(a >= 0.0) {
            return Err(Error::Domain(format!(
                "trade size must be non-negative, got {a}"
            )));
        }
        Ok(self.cost(a))
    }

    /// `F(a)` without the domain check, for hot paths where `a ≥ 0` holds
    /// by construction.
    #[inline]
    pub(crate) fn cost(&self, a: f64) -> f64 {
        if a == 0.0 {
            0.0
        } else {
            self.coefficient * a.powf(self.gamma)
        }
    }

    /// `F` tabulated at integer sizes `0..=k_max`.
    pub fn table(&self, k_max: usize) -> Vec<f64> {
        (0..=k_max).map(|a| self.cost(a as f64)).collect()
    }

    /// Multiplicative coefficient.
    pub fn coefficient(&self) -> f64 {
        self.coefficient
    }

    /// Convexity exponent `gamma`.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

/// Distribution of incoming order sizes on `{1, 2, ..., y_max}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeDistribution {
    /// `pmf[y-1] = P(Y = y)`.
    pmf: Vec<f64>,
    /// `tail[y-1] = P(Y ≥ y)`; `tail[0] = 1`.
    tail: Vec<f64>,
    /// `cdf[y-1] = P(Y ≤ y)`, for inverse-transform sampling.
    cdf: Vec<f64>,
}

impl SizeDistribution {
    /// Build from an explicit pmf table, `pmf[y-1] = P(Y = y)`.
    ///
    /// Entries must be non-negative with a positive sum; the table is
    /// renormalized to sum to one (a drift beyond 1e-6 is logged).
    /// Trailing zero entries are trimmed.
    pub fn from_pmf(mut pmf: Vec<f64>) -> Result<Self> {
        while pmf.len() > 1 && *pmf.last().unwrap() == 0.0 {
            pmf.pop();
        }
        if pmf.is_empty() {
            return Err(Error::Domain("size pmf must be non-empty".into()));
        }
        if let Some(bad) = pmf.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
            return Err(Error::Domain(format!(
                "size pmf entries must be non-negative and finite, got {bad}"
            )));
        }
        let sum: f64 = pmf.iter().sum();
        if sum <= 0.0 {
            return Err(Error::Domain(
                "size pmf must have positive total mass".into(),
            ));
        }
        if (sum - 1.0).abs() > 1e-6 {
            log::warn!("size pmf sums to {sum}; renormalizing");
        }
        for p in &mut pmf {
            *p /= sum;
        }
        let mut tail = vec![0.0; pmf.len()];
        let mut acc = 0.0;
        for y in (0..pmf.len()).rev() {
            acc += pmf[y];
            tail[y] = acc;
        }
        let mut cdf = pmf.clone();
        for y in 1..cdf.len() {
            cdf[y] += cdf[y - 1];
        }
        Ok(Self { pmf, tail, cdf })
    }

    /// Poisson(`mu`) conditioned on `Y ≥ 1` and truncated at `y_max`:
    /// `P(Y = y) ∝ e^{-mu} mu^y / y!` for `y = 1..=y_max`.
    ///
    /// Fails if the truncation discards more than a 1e-10 fraction of the
    /// conditioned mass; the error reports the `y_max` that would suffice.
    pub fn truncated_poisson(mu: f64, y_max: usize) -> Result<Self> {
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::Domain(format!(
                "truncated Poisson rate must be positive, got {mu}"
            )));
        }
        if y_max == 0 {
            return Err(Error::Domain("truncated Poisson needs y_max >= 1".into()));
        }
        // w[y-1] = e^{-mu} mu^y / y!, built recursively.
        let mut w = Vec::with_capacity(y_max);
        let mut term = (-mu).exp() * mu;
        let mut sum = 0.0;
        for y in 1..=y_max {
            w.push(term);
            sum += term;
            term *= mu / (y as f64 + 1.0);
        }
        let norm = 1.0 - (-mu).exp();
        let left_out = ((norm - sum) / norm).max(0.0);
        if left_out > TRUNCATION_TOL {
            // extend the recursion to find a sufficient cutoff
            let mut y = y_max;
            let mut tail = norm - sum;
            while tail / norm > TRUNCATION_TOL && y < 10_000 {
                y += 1;
                tail -= term;
                term *= mu / (y as f64 + 1.0);
            }
            return Err(Error::Truncation(format!(
                "truncated Poisson(mu={mu}) leaves a {left_out:.2e} fraction of mass beyond \
                 y_max={y_max}; y_max of {y} required"
            )));
        }
        Self::from_pmf(w)
    }

    /// Largest size with positive probability.
    pub fn y_max(&self) -> usize {
        self.pmf.len()
    }

    /// `P(Y = y)`; zero outside `{1..y_max}`.
    pub fn pmf(&self, y: usize) -> f64 {
        if y >= 1 && y <= self.pmf.len() {
            self.pmf[y - 1]
        } else {
            0.0
        }
    }

    /// Upper tail `P(Y ≥ y)` for `y ≥ 1`; `tail(1) = 1`.
    pub fn tail(&self, y: usize) -> f64 {
        if y == 0 {
            1.0
        } else if y <= self.tail.len() {
            self.tail[y - 1]
        } else {
            0.0
        }
    }

    /// Mean order size.
    pub fn mean(&self) -> f64 {
        self.pmf
            .iter()
            .enumerate()
            .map(|(i, p)| (i + 1) as f64 * p)
            .sum()
    }

    /// Inverse-transform sample: map a uniform draw `u ∈ [0,1)` to a size.
    pub fn sample(&self, u: f64) -> usize {
        let idx = self.cdf.partition_point(|c| *c <= u);
        idx.min(self.pmf.len() - 1) + 1
    }
}

/// Markov-modulated order-flow model.
///
/// A continuous-time Markov chain on regimes `{1..m}` with generator `Q`
/// (row-major, rows sum to zero) modulates the order arrival intensity:
/// while the chain sits in regime `i`, matching orders arrive at Poisson
/// rate `intensities[i]` and carry i.i.d. sizes drawn from `sizes[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeModel {
    m: usize,
    generator: Vec<f64>,
    intensities: Vec<f64>,
    sizes: Vec<SizeDistribution>,
}

impl RegimeModel {
    /// Build and validate a model. All validation violations are reported
    /// together in the error, not just the first.
    pub fn new(
        generator: Vec<f64>,
        intensities: Vec<f64>,
        sizes: Vec<SizeDistribution>,
    ) -> Result<Self> {
        let model = Self::new_unchecked(generator, intensities, sizes);
        model.validate()?;
        Ok(model)
    }

    /// Build without validation.
    ///
    /// Intended for experiments outside the solvers' domain (e.g. an
    /// absorbing regime with zero arrival intensity fed straight to the
    /// simulator). Solvers validate their model arguments regardless.
    pub fn new_unchecked(
        generator: Vec<f64>,
        intensities: Vec<f64>,
        sizes: Vec<SizeDistribution>,
    ) -> Self {
        let m = intensities.len();
        Self {
            m,
            generator,
            intensities,
            sizes,
        }
    }

    /// Single-regime model with arrival rate `lambda` and unit order sizes.
    ///
    /// The size distribution only matters for fill-constrained solves and
    /// simulation; unconstrained single-regime solves ignore it.
    pub fn poisson(lambda: f64) -> Result<Self> {
        Self::new(
            vec![0.0],
            vec![lambda],
            vec![SizeDistribution::from_pmf(vec![1.0])?],
        )
    }

    /// Check generator shape and sign structure, row sums, intensity
    /// signs, and size-table arity. Every violation is listed.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let m = self.m;
        if m == 0 {
            errs.push("model needs at least one regime".to_string());
            return Err(Error::InvalidModel(errs));
        }
        if self.generator.len() != m * m {
            errs.push(format!(
                "generator must be {m}x{m} row-major ({} entries), got {}",
                m * m,
                self.generator.len()
            ));
        }
        if self.sizes.len() != m {
            errs.push(format!(
                "expected {m} size distributions, got {}",
                self.sizes.len()
            ));
        }
        if self.generator.len() == m * m {
            for i in 0..m {
                let row = &self.generator[i * m..(i + 1) * m];
                let scale = row.iter().fold(1.0f64, |s, q| s.max(q.abs()));
                for (j, q) in row.iter().enumerate() {
                    if !q.is_finite() {
                        errs.push(format!("generator entry ({i},{j}) is not finite"));
                    } else if i != j && *q < 0.0 {
                        errs.push(format!(
                            "generator off-diagonal ({i},{j}) must be non-negative, got {q}"
                        ));
                    }
                }
                let sum: f64 = row.iter().sum();
                if sum.abs() > 1e-12 * scale {
                    errs.push(format!("generator row {i} must sum to 0, sums to {sum:e}"));
                }
            }
        }
        // zero is allowed: a silent regime produces no arrivals but is a
        // perfectly good state for the chain (and for the simulator)
        for (i, lam) in self.intensities.iter().enumerate() {
            if !(lam.is_finite() && *lam >= 0.0) {
                errs.push(format!(
                    "intensity must be non-negative, regime {i} has {lam}"
                ));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidModel(errs))
        }
    }

    /// Number of regimes.
    pub fn num_regimes(&self) -> usize {
        self.m
    }

    /// Row-major generator matrix.
    pub fn generator(&self) -> &[f64] {
        &self.generator
    }

    /// Transition rate from regime `i` to `j` (`i ≠ j`), or the diagonal.
    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.generator[i * self.m + j]
    }

    /// Arrival intensity in regime `i`.
    pub fn intensity(&self, i: usize) -> f64 {
        self.intensities[i]
    }

    /// All arrival intensities.
    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }

    /// Order-size distribution of regime `i`.
    pub fn sizes(&self, i: usize) -> &SizeDistribution {
        &self.sizes[i]
    }

    /// Largest order size with positive probability under any regime.
    pub fn max_y(&self) -> usize {
        self.sizes.iter().map(|s| s.y_max()).max().unwrap_or(0)
    }
}

/// Probability vector over regimes.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief(Vec<f64>);

impl Belief {
    /// Build from weights: entries must be non-negative and sum to 1 within
    /// 1e-10; the vector is then renormalized exactly.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Domain("belief must be non-empty".into()));
        }
        if let Some(bad) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::Domain(format!(
                "belief weights must be non-negative and finite, got {bad}"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-10 {
            return Err(Error::Domain(format!(
                "belief weights must sum to 1, sum to {sum}"
            )));
        }
        Ok(Self::normalized(weights))
    }

    /// Renormalize a non-negative weight vector with positive sum.
    /// Internal: callers guard degeneracy themselves.
    pub(crate) fn normalized(mut weights: Vec<f64>) -> Self {
        let sum: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= sum;
        }
        Self(weights)
    }

    /// Point mass on regime `i` (0-based) out of `m`.
    pub fn corner(m: usize, i: usize) -> Self {
        assert!(i < m, "corner index {i} out of range for {m} regimes");
        let mut w = vec![0.0; m];
        w[i] = 1.0;
        Self(w)
    }

    /// Uniform belief over `m` regimes.
    pub fn uniform(m: usize) -> Self {
        assert!(m > 0);
        Self(vec![1.0 / m as f64; m])
    }

    /// The weight vector.
    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    /// Number of regimes.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    /// True if the belief has zero length (never, for constructed values).
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// JSON model schema: depth parameters plus regime structure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Depth function parameters.
    pub depth: DepthConfig,
    /// Regime-switching order-flow parameters.
    pub regimes: RegimesConfig,
}

/// Depth-function parameters as they appear in config files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DepthConfig {
    /// Multiplicative coefficient (`> 0`).
    pub coefficient: f64,
    /// Convexity exponent (`> 1`).
    pub gamma: f64,
}

/// Regime block of the model schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegimesConfig {
    /// Row-major `m×m` generator.
    pub generator: Vec<f64>,
    /// Arrival intensity per regime (length `m`).
    pub intensities: Vec<f64>,
    /// Order-size distribution per regime (length `m`).
    pub sizes: Vec<SizeConfig>,
}

/// Order-size distribution spec.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SizeConfig {
    /// Zero-truncated Poisson with rate `mu`, cut at `y_max`.
    TruncatedPoisson {
        /// Poisson rate parameter.
        mu: f64,
        /// Truncation cutoff.
        y_max: usize,
    },
    /// Explicit pmf table; `pmf[y-1] = P(Y = y)`.
    Table {
        /// Probability masses for sizes `1..`.
        pmf: Vec<f64>,
    },
}

impl SizeConfig {
    /// Materialize the distribution.
    pub fn build(&self) -> Result<SizeDistribution> {
        match self {
            SizeConfig::TruncatedPoisson { mu, y_max } => {
                SizeDistribution::truncated_poisson(*mu, *y_max)
            }
            SizeConfig::Table { pmf } => SizeDistribution::from_pmf(pmf.clone()),
        }
    }
}

impl ModelConfig {
    /// Parse from JSON text.
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Serialize to pretty JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model config serializes")
    }

    /// Build the validated depth function and regime model.
    pub fn build(&self) -> Result<(DepthFunction, RegimeModel)> {
        let depth = DepthFunction::new(self.depth.coefficient, self.depth.gamma)?;
        let sizes = self
            .regimes
            .sizes
            .iter()
            .map(|s| s.build())
            .collect::<Result<Vec<_>>>()?;
        let model = RegimeModel::new(
            self.regimes.generator.clone(),
            self.regimes.intensities.clone(),
            sizes,
        )?;
        Ok((depth, model))
    }
}

use serde::{Deserialize, Serialize};

use super::EnvError;

/// Quadratic price coefficients for one hour: `F(L) = a L^2 + b L + c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl PriceCoefficients {
    pub const fn new(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c }
    }

    /// `a > 0` and `b, c >= 0` make the price strictly increasing and strictly
    /// convex on non-negative load.
    pub fn validate(&self) -> Result<(), EnvError> {
        let finite = self.a.is_finite() && self.b.is_finite() && self.c.is_finite();
        if !finite || self.a <= 0.0 || self.b < 0.0 || self.c < 0.0 {
            return Err(EnvError::Price(format!(
                "need a > 0, b >= 0, c >= 0 (got a={}, b={}, c={})",
                self.a, self.b, self.c
            )));
        }
        Ok(())
    }

    #[inline]
    fn eval(&self, load: f64) -> f64 {
        (self.a * load + self.b) * load + self.c
    }
}

/// Load-dependent dynamic tariff plus the proportional-billing constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceModel {
    coefficients: Vec<PriceCoefficients>,
    kappa: f64,
}

impl PriceModel {
    pub fn new(coefficients: Vec<PriceCoefficients>, kappa: f64) -> Result<Self, EnvError> {
        if coefficients.is_empty() {
            return Err(EnvError::Price("price model needs at least one hour".into()));
        }
        for c in &coefficients {
            c.validate()?;
        }
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(EnvError::Price(format!("kappa must be positive (got {kappa})")));
        }
        Ok(Self { coefficients, kappa })
    }

    /// The same coefficients for each of `horizon` hours.
    pub fn uniform(horizon: usize, coeffs: PriceCoefficients, kappa: f64) -> Result<Self, EnvError> {
        Self::new(vec![coeffs; horizon], kappa)
    }

    pub fn horizon(&self) -> usize {
        self.coefficients.len()
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn coefficients(&self) -> &[PriceCoefficients] {
        &self.coefficients
    }

    /// Every coefficient multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self, EnvError> {
        let coefficients = self
            .coefficients
            .iter()
            .map(|c| PriceCoefficients::new(c.a * factor, c.b * factor, c.c * factor))
            .collect();
        Self::new(coefficients, self.kappa)
    }

    fn coeffs(&self, hour: usize) -> Result<&PriceCoefficients, EnvError> {
        self.coefficients.get(hour).ok_or(EnvError::HourOutOfRange {
            hour,
            horizon: self.coefficients.len(),
        })
    }

    /// Unit price at total network load `load` (kW).
    pub fn price(&self, load: f64, hour: usize) -> Result<f64, EnvError> {
        check_load(load)?;
        Ok(self.coeffs(hour)?.eval(load))
    }

    /// Network cost for the hour: unit price times energy delivered.
    pub fn network_cost(&self, load: f64, hour: usize, dt: f64) -> Result<f64, EnvError> {
        if !(dt > 0.0) {
            return Err(EnvError::Contract(format!("time step must be positive (got {dt})")));
        }
        Ok(self.price(load, hour)? * load * dt)
    }

    /// One user's share of the network bill, proportional to its demand.
    pub fn billing_share(
        &self,
        own_load: f64,
        total_load: f64,
        hour: usize,
        dt: f64,
    ) -> Result<f64, EnvError> {
        check_load(own_load)?;
        check_load(total_load)?;
        if total_load == 0.0 {
            if own_load == 0.0 {
                return Ok(0.0);
            }
            return Err(EnvError::Contract(format!(
                "own load {own_load} with zero total load"
            )));
        }
        // Allow for rounding when the total was accumulated from the parts.
        if own_load > total_load * (1.0 + 1e-12) {
            return Err(EnvError::Contract(format!(
                "own load {own_load} exceeds total load {total_load}"
            )));
        }
        Ok(self.kappa * (own_load / total_load) * self.network_cost(total_load, hour, dt)?)
    }
}

fn check_load(load: f64) -> Result<(), EnvError> {
    if !(load >= 0.0 && load.is_finite()) {
        return Err(EnvError::NegativeLoad(load));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn model() -> PriceModel {
        PriceModel::uniform(24, PriceCoefficients::new(0.01, 0.1, 0.05), 1.0).unwrap()
    }

    #[test]
    fn price_examples() {
        let m = model();
        assert_relative_eq!(m.price(0.0, 0).unwrap(), 0.05);
        assert_relative_eq!(m.price(10.0, 3).unwrap(), 2.05, max_relative = 1e-12);
        assert!(matches!(m.price(-1.0, 0), Err(EnvError::NegativeLoad(_))));
        assert!(matches!(m.price(1.0, 24), Err(EnvError::HourOutOfRange { .. })));
    }

    #[test]
    fn network_cost_examples() {
        let m = model();
        assert_eq!(m.network_cost(0.0, 0, 1.0).unwrap(), 0.0);
        assert_relative_eq!(m.network_cost(10.0, 0, 1.0).unwrap(), 20.5, max_relative = 1e-12);
        assert!(m.network_cost(1.0, 0, 0.0).is_err());
    }

    #[test]
    fn network_cost_second_differences_positive() {
        let m = model();
        let h = 0.25;
        for k in 1..200 {
            let l = k as f64 * h;
            let d2 = m.network_cost(l + h, 0, 1.0).unwrap() - 2.0 * m.network_cost(l, 0, 1.0).unwrap()
                + m.network_cost(l - h, 0, 1.0).unwrap();
            assert!(d2 > 0.0, "second difference {d2} at L={l}");
        }
    }

    #[test]
    fn billing_examples() {
        let m = model();
        let total = m.network_cost(7.0, 0, 1.0).unwrap();
        assert_relative_eq!(m.billing_share(7.0, 7.0, 0, 1.0).unwrap(), total);

        // Price with C(5) = 10: a*25*5 + b*5*5 + c*5 = 10 for a=0.04, b=0.2, c=0.
        let m = PriceModel::uniform(1, PriceCoefficients::new(0.04, 0.2, 0.0), 1.0).unwrap();
        assert_relative_eq!(m.network_cost(5.0, 0, 1.0).unwrap(), 10.0, max_relative = 1e-12);
        assert_relative_eq!(m.billing_share(2.0, 5.0, 0, 1.0).unwrap(), 4.0, max_relative = 1e-12);
        assert_relative_eq!(m.billing_share(3.0, 5.0, 0, 1.0).unwrap(), 6.0, max_relative = 1e-12);

        assert_eq!(m.billing_share(0.0, 0.0, 0, 1.0).unwrap(), 0.0);
        assert!(m.billing_share(1.0, 0.0, 0, 1.0).is_err());
        assert!(m.billing_share(6.0, 5.0, 0, 1.0).is_err());
    }

    #[test]
    fn invalid_models_rejected() {
        assert!(PriceModel::uniform(3, PriceCoefficients::new(0.0, 0.1, 0.1), 1.0).is_err());
        assert!(PriceModel::uniform(3, PriceCoefficients::new(0.1, -0.1, 0.1), 1.0).is_err());
        assert!(PriceModel::uniform(3, PriceCoefficients::new(0.1, 0.1, 0.1), 0.0).is_err());
        assert!(PriceModel::new(vec![], 1.0).is_err());
    }

    proptest! {
        #[test]
        fn price_increasing(a in 1e-4..1.0f64, b in 0.0..1.0f64, c in 0.0..1.0f64,
                            l1 in 0.0..100.0f64, dl in 1e-6..50.0f64) {
            let m = PriceModel::uniform(1, PriceCoefficients::new(a, b, c), 1.0).unwrap();
            prop_assert!(m.price(l1, 0).unwrap() < m.price(l1 + dl, 0).unwrap());
        }

        #[test]
        fn billing_sums_to_kappa_cost(loads in proptest::collection::vec(0.0..20.0f64, 1..12),
                                      kappa in 0.1..3.0f64) {
            let m = PriceModel::uniform(1, PriceCoefficients::new(0.01, 0.05, 0.01), kappa).unwrap();
            let total: f64 = loads.iter().sum();
            let bills: f64 = loads.iter().map(|&l| m.billing_share(l, total, 0, 1.0).unwrap()).sum();
            let expected = kappa * m.network_cost(total, 0, 1.0).unwrap();
            prop_assert!((bills - expected).abs() <= 1e-12 * expected.abs().max(1e-300));
        }
    }
}

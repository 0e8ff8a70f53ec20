//! Bundled instances.

use crate::marginals::{Asset, MarginalLaw, MarginalSystem};
use crate::payoffs::PayoffSpec;

/// Two assets, two maturities, three support points each; `X_0 = 10`, `Y_0 = 20`.
///
/// | law | points       | masses        |
/// |-----|--------------|---------------|
/// | X_1 | 9, 10, 11    | .2, .6, .2    |
/// | X_2 | 0, 10, 20    | .1, .8, .1    |
/// | Y_1 | 16, 20, 24   | .3, .4, .3    |
/// | Y_2 | 14, 20, 26   | .2, .6, .2    |
pub fn illustrative_system() -> MarginalSystem {
    let law = |asset, t, points: [f64; 3], masses: [f64; 3]| {
        MarginalLaw::from_parts(asset, t, points.to_vec(), masses.to_vec())
            .expect("fixture law is valid")
    };
    MarginalSystem::new(
        vec![
            law(Asset::X, 1, [9.0, 10.0, 11.0], [0.2, 0.6, 0.2]),
            law(Asset::X, 2, [0.0, 10.0, 20.0], [0.1, 0.8, 0.1]),
        ],
        vec![
            law(Asset::Y, 1, [16.0, 20.0, 24.0], [0.3, 0.4, 0.3]),
            law(Asset::Y, 2, [14.0, 20.0, 26.0], [0.2, 0.6, 0.2]),
        ],
    )
    .expect("fixture system is valid")
}

/// `max{(X_2 - X_1)^2, (Y_2 - Y_1)^2}`, the payoff priced on [`illustrative_system`].
pub fn illustrative_payoff() -> PayoffSpec {
    PayoffSpec::MaxSquaredIncrement
}

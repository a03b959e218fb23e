//! Numerical versions of the Gronwall / Bihari–LaSalle inequalities and of the
//! explicit solution bounds.

mod bihari;
mod bounds;
pub mod quadrature;

pub use bihari::{big_g, bihari_bound, bihari_bound_from_integral, bihari_bound_with_breaks, gronwall_bound, BihariResult};
pub use bounds::{apriori_bound, stability_bound, weighted_y_bound, AprioriBound};

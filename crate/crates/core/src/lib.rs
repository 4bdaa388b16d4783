//! Compactification of asymptotically autonomous ODEs.
//!
//! A nonautonomous system `x' = f(x, Γ(t))` whose forcing settles to
//! constant limits is rewritten as an autonomous system on `(x, s)` with
//! `s = g(t)` squeezing the time line into a bounded interval. The end
//! subspaces `s = ±1` carry the frozen limit systems, so equilibria there
//! and their invariant manifolds describe pullback attractors and
//! rate-induced tipping of the original problem.

pub mod expr;
pub mod extended;
pub mod invariant;
pub mod odeint;
pub mod cli;
pub mod conditions;
pub mod connect;
pub mod problem;
pub mod transform;

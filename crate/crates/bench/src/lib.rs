//! Shared setup for the benchmarks in benches/.

use fedosov_core::fixtures::chart;
use fedosov_core::ring::{rat, NuTruncation};
use fedosov_core::{solve_r, Connection, EFormSeries, FedosovSetup, FedosovSolution, Geometry};

/// Weyl-ordered setup with B = 0 and the half-structure-constant connection.
pub fn weyl_setup(name: &str, l: u32, t: u32) -> FedosovSetup {
    let ch = chart(name);
    let conn = Connection::half_structure_constants(&ch);
    let (n, rank) = (ch.n, ch.rank);
    FedosovSetup::new(Geometry::new(ch, conn).unwrap(), EFormSeries::zero(n, rank), rat(1, 2), NuTruncation::new(l, t).unwrap()).unwrap()
}

pub fn weyl_solution(name: &str, l: u32, t: u32) -> FedosovSolution {
    solve_r(&weyl_setup(name, l, t)).unwrap()
}

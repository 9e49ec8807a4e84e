//! Experiment harness over the `equifold` library: configs, towers, check
//! suites and reports.

pub mod config;
pub mod report;
pub mod suites;
pub mod towers;

use std::fmt::Write as _;

use rayon::prelude::*;

use config::Suite;
use report::{sort_records, ReportRecord};
use towers::Tower;

/// Process exit codes.
pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// Runs the selected suites (in parallel) and returns the records sorted by
/// `(suite, check)`.
pub fn run(tower: &Tower, suites: &[Suite], seed: u64, timings: bool) -> Vec<ReportRecord> {
    let mut suites = suites.to_vec();
    suites.sort();
    suites.dedup();
    let mut records: Vec<ReportRecord> =
        suites.par_iter().flat_map_iter(|&s| suites::run_suite(tower, s, seed, timings)).collect();
    sort_records(&mut records);
    records
}

pub fn exit_code(records: &[ReportRecord]) -> i32 {
    if records.iter().all(|r| r.pass) {
        EXIT_PASS
    } else {
        EXIT_CHECK_FAILED
    }
}

/// Human-readable summary of a tower: orders, cover sizes, even-cover radius
/// and the spectral gap of `D₁` (0 when gapless).
pub fn describe(tower: &Tower) -> String {
    let (d1, _) = tower.operators();
    let gap = equifold::spectral::spectral_gap(&d1).unwrap_or(0.0);
    let (m1, m2) = (tower.m1(), tower.m2());
    let mut s = String::new();
    let _ = writeln!(s, "tower: {}", tower.name());
    let _ = writeln!(s, "group_order: {}", tower.group.order());
    let _ = writeln!(s, "subgroup_order: {}", tower.ctx.subgroup().order());
    let _ = writeln!(s, "quotient_order: {}", tower.ctx.quotient().quotient_group().order());
    let _ = writeln!(s, "base_vertices: {}", m1.base().vertex_count());
    let _ = writeln!(s, "fiber_rank: {}", tower.rank());
    let _ = writeln!(s, "graded: {}", tower.is_graded());
    let _ = writeln!(s, "m1_vertices: {}", m1.vertex_count());
    let _ = writeln!(s, "m2_vertices: {}", m2.vertex_count());
    let _ = writeln!(s, "even_cover_radius: {}", m1.even_cover_radius());
    let _ = writeln!(s, "spectral_gap: {gap}");
    s
}

use lwa_sbl::pipeline::{estimate, merge_deduplicate, DoaEstimate, EstimatorConfig, Mode};
use lwa_sbl::presets::{reference_plan, AntennaPreset};
use lwa_sbl::sector::{plan_sectors, SectorPlan};
use lwa_sbl::signal::{simulate_snapshots, Coherence, SourceScenario};
use lwa_sbl::{Antenna, Plan};
use proptest::prelude::*;

fn setup() -> (Antenna, lwa_sbl::Grid, Plan) {
    let params = Antenna::paper();
    let grid = AntennaPreset::PaperAntenna.grid().unwrap();
    let plan = reference_plan(&params, &grid).unwrap();
    (params, grid, plan)
}

#[test]
fn estimation_is_deterministic_and_parallel_agnostic() {
    let (params, grid, plan) = setup();
    let sc = SourceScenario::with_random_phases(vec![-35.2, 10.3, 47.6], Coherence::Coherent, 3).unwrap();
    let y = simulate_snapshots(&params, &grid, &sc, 60, 15.0, 4).unwrap().y;
    for mode in [Mode::SfOngrid, Mode::SfOffgrid] {
        let mut cfg = EstimatorConfig::new(mode, plan.clone());
        let a = estimate(&y, &params, &grid, &cfg).unwrap();
        let b = estimate(&y, &params, &grid, &cfg).unwrap();
        cfg.parallel_sectors = true;
        let c = estimate(&y, &params, &grid, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        assert_eq!(a.len(), 3, "{mode}: {a:?}");
    }
}

#[test]
fn single_sector_plan_matches_full_fov_mode() {
    let (params, grid, plan) = setup();
    let sc = SourceScenario::with_random_phases(vec![-20.0, 25.4], Coherence::Incoherent, 8).unwrap();
    let y = simulate_snapshots(&params, &grid, &sc, 30, 20.0, 9).unwrap().y;
    let full = EstimatorConfig::new(Mode::FullfovOngrid, plan.clone());
    let single = EstimatorConfig::new(Mode::SfOngrid, SectorPlan::full_fov(-90.0, 90.0, 1.0, grid.n).unwrap());
    assert_eq!(estimate(&y, &params, &grid, &full).unwrap(), estimate(&y, &params, &grid, &single).unwrap());
}

#[test]
fn known_count_truncates() {
    let (params, grid, plan) = setup();
    let sc = SourceScenario::with_random_phases(vec![10.3, 15.7, 20.7], Coherence::Coherent, 1).unwrap();
    let y = simulate_snapshots(&params, &grid, &sc, 50, 10.0, 2).unwrap().y;
    let mut cfg = EstimatorConfig::new(Mode::SfOffgrid, plan);
    cfg.k_known = Some(2);
    assert_eq!(estimate(&y, &params, &grid, &cfg).unwrap().len(), 2);
}

#[test]
fn reference_plan_tiles_field_of_view() {
    let (params, grid, plan) = setup();
    assert_eq!(plan.len(), 6);
    assert_eq!(plan.sectors[0].theta_lo, -90.0);
    assert_eq!(plan.sectors[5].theta_hi, 90.0);
    for w in plan.sectors.windows(2) {
        assert_eq!(w[0].theta_hi, w[1].theta_lo);
        let (b0, b1) = (w[0].band.unwrap(), w[1].band.unwrap());
        assert_eq!(b0.hi + 1, b1.lo);
    }
    assert!(plan.contains_main_lobe(params.max_beamwidth(&grid).unwrap()));
}

fn arb_estimates() -> impl Strategy<Value = Vec<DoaEstimate<f64>>> {
    prop::collection::vec((-90.0f64..90.0, 0.0f64..10.0, 0usize..6), 0..25)
        .prop_map(|v| v.into_iter().map(|(angle, weight, sector)| DoaEstimate { angle, weight, sector, refined: false }).collect())
}

proptest! {
    #[test]
    fn merge_is_idempotent_sorted_and_separated(est in arb_estimates(), radius in 0.1f64..5.0) {
        let once = merge_deduplicate(&est, radius, None);
        prop_assert_eq!(&merge_deduplicate(&once, radius, None), &once);
        for w in once.windows(2) {
            prop_assert!(w[1].angle - w[0].angle > radius);
        }
        let max_w = est.iter().map(|e| e.weight).fold(f64::NEG_INFINITY, f64::max);
        if !est.is_empty() {
            prop_assert!(once.iter().any(|e| e.weight == max_w));
        }
    }

    #[test]
    fn merge_keeps_strongest_k(est in arb_estimates(), k in 1usize..5) {
        let all = merge_deduplicate(&est, 1.0, None);
        let top = merge_deduplicate(&est, 1.0, Some(k));
        prop_assert_eq!(top.len(), all.len().min(k));
        let min_top = top.iter().map(|e| e.weight).fold(f64::INFINITY, f64::min);
        let dropped = all.iter().filter(|e| !top.contains(e));
        for e in dropped {
            prop_assert!(e.weight <= min_top);
        }
    }

    #[test]
    fn sectors_partition_any_fov(lo in -90.0f64..0.0, span in 10.0f64..180.0, width in 5.0f64..60.0) {
        let hi = (lo + span).min(90.0);
        prop_assume!(hi - lo >= width.max(2.0));
        let plan = plan_sectors(lo, hi, width, 1.0, 0.0).unwrap();
        prop_assert_eq!(plan.sectors.first().unwrap().theta_lo, lo);
        prop_assert_eq!(plan.sectors.last().unwrap().theta_hi, hi);
        for w in plan.sectors.windows(2) {
            prop_assert_eq!(w[0].theta_hi, w[1].theta_lo);
        }
        for s in &plan.sectors {
            prop_assert_eq!(s.grid[0], s.theta_lo);
            for w in s.grid.windows(2) {
                prop_assert!((w[1] - w[0] - 1.0).abs() < 1e-9);
            }
            prop_assert!(s.grid.iter().all(|&g| s.contains(g)));
            prop_assert!(s.theta_hi - s.grid.last().unwrap() <= 1.0 + 1e-9);
        }
    }
}

#[test]
fn single_precision_pipeline_finds_sources() {
    let params = lwa_sbl::lwa::AntennaParams::<f32>::paper();
    let grid = AntennaPreset::PaperAntenna.grid::<f32>().unwrap();
    let plan = reference_plan(&params, &grid).unwrap();
    let sc = SourceScenario::with_random_phases(vec![-40.0f32, 22.0], Coherence::Incoherent, 5).unwrap();
    let y = simulate_snapshots(&params, &grid, &sc, 40, 20.0, 6).unwrap().y;
    let mut cfg = EstimatorConfig::new(Mode::SfOngrid, plan);
    cfg.k_known = Some(2);
    let est = estimate(&y, &params, &grid, &cfg).unwrap();
    let angles: Vec<f32> = est.iter().map(|e| e.angle).collect();
    assert_eq!(angles, vec![-40.0, 22.0]);
}

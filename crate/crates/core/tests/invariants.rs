use circle_lab::conditions::evaluate_conditions;
use circle_lab::orbit::{compute_window, iterate_orbit, CriticalOrbits, WindowTable};
use circle_lab::structure::{build_itinerary, detect_deep_returns, ReturnRadius};
use circle_lab::sweep::{compare_with_grid, evaluate_parameter, grid_sweep, interval_refine, DEFAULT_WIDTH_MIN};
use circle_lab::{ConstantsProfile, Map, Map32, Phi, Phi32};

fn base(l: f64) -> Map {
    Map::new(Phi::sin2pi(), 0.0, l).unwrap()
}

#[test]
fn sweep_rows_match_single_parameter_checks() {
    let prof = ConstantsProfile::desk();
    let b = base(1e4);
    let s = grid_sweep(&b, &prof, 400, 80);
    for row in s.rows.iter().step_by(7) {
        let single = evaluate_parameter(&b, &prof, row.a, 80);
        assert_eq!(single.exclusion_step, row.exclusion_step);
        let rep = evaluate_conditions(&b.with_a(row.a), &prof, 80).unwrap();
        assert_eq!(rep.delta_n_ok(), row.delta_n, "a = {}", row.a);
        assert_eq!(rep.exclusion_step(prof.n), row.exclusion_step, "a = {}", row.a);
    }
}

#[test]
fn good_fraction_is_non_increasing() {
    let s = grid_sweep(&base(1e4), &ConstantsProfile::desk(), 1000, 120);
    assert_eq!(s.good_fraction.len(), 121);
    assert!(s.good_fraction.windows(2).all(|w| w[1] <= w[0]));
    let survivors = s.rows.iter().filter(|r| r.survives(120)).count();
    assert_eq!(survivors as f64 / 1000.0, s.good_fraction_at(120));
}

#[test]
fn refinement_nests_and_brackets_the_grid() {
    let prof = ConstantsProfile::desk();
    let b = base(1e4);
    let gens = [40, 60, 80];
    let r = interval_refine(&b, &prof, &gens, 12, DEFAULT_WIDTH_MIN);
    let s = grid_sweep(&b, &prof, 4000, 80);
    for w in r.generations.windows(2) {
        assert!(w[1].is_subset_of(&w[0]));
    }
    for set in &r.generations {
        assert!(set.is_sorted_disjoint());
        let cmp = compare_with_grid(set, &s, DEFAULT_WIDTH_MIN);
        assert!(cmp.bracketed, "{cmp:?}");
    }
}

#[test]
fn window_table_agrees_with_direct_window() {
    let m = base(1e3).with_a(0.37);
    let orbits = CriticalOrbits::compute(&m, 60).unwrap();
    for rec in &orbits.records {
        let table = WindowTable::build(rec, m.l());
        for n in 1..=table.valid_to.min(40) {
            let direct = compute_window(rec, m.l(), n).unwrap();
            let cached = table.log_d_n(n).unwrap();
            assert!((direct - cached).abs() <= 1e-9 * direct.abs().max(1.0), "n = {n}");
        }
    }
}

#[test]
fn single_precision_shadows_double_for_a_few_steps() {
    let m64 = Map::new(Phi::sin2pi(), 0.3, 2.0).unwrap();
    let m32 = Map32::new(Phi32::sin2pi(), 0.3, 2.0).unwrap();
    let r64 = iterate_orbit(&m64, 0.1, 3);
    let r32 = iterate_orbit(&m32, 0.1, 3);
    for (x, y) in r64.points.iter().zip(&r32.points) {
        let d = (x - *y as f64).abs();
        assert!(d.min(1.0 - d) < 1e-3, "{x} vs {y}");
    }
}

#[test]
fn itinerary_events_do_not_overlap() {
    let prof = ConstantsProfile::desk();
    let b = base(1e4);
    for k in 0..40 {
        let m = b.with_a(k as f64 / 40.0 + 0.0123);
        let Ok(orbits) = CriticalOrbits::compute(&m, 150) else { continue };
        let radius = ReturnRadius::DeltaRoot20.value(&prof, m.l());
        for c in 0..orbits.records.len() {
            let Ok(it) = build_itinerary(&m, &orbits, c, 120, radius) else { continue };
            let it = detect_deep_returns(&it, &orbits.records[c], m.l());
            for w in it.events.windows(2) {
                assert!(w[0].time + w[0].p <= w[1].time);
            }
            for ev in &it.events {
                assert!(ev.p >= 1 && ev.distance < radius);
                assert_eq!(ev.outside_window, ev.p == 1);
            }
            assert!(it.total_bound_time() <= 120 + orbits.horizon);
        }
    }
}

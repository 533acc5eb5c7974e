use pho_core::engine::{frame_time, run, write_events_jsonl, write_trace_csv, RunResult};
use pho_core::pho::{plan_trigger, HoPhase, TimingBudget, TriggerDecision};
use pho_core::{SbsId, ScenarioConfig, SimTime, StrategyKind};
use proptest::prelude::*;

fn run_cfg(cfg: &ScenarioConfig) -> RunResult {
    let s = cfg.build().unwrap();
    let p = s.analytic_predictor();
    run(&s, p.as_ref().map(|p| p as _), s.seed).unwrap()
}

fn bytes(r: &RunResult) -> (Vec<u8>, Vec<u8>) {
    let (mut t, mut e) = (Vec::new(), Vec::new());
    write_trace_csv(&r.trace, &mut t).unwrap();
    write_events_jsonl(&r.events, &mut e).unwrap();
    (t, e)
}

#[test]
fn identical_seed_identical_bytes() {
    for kind in [
        StrategyKind::Proactive,
        StrategyKind::Reactive,
        StrategyKind::None,
    ] {
        let mut cfg = ScenarioConfig::default();
        cfg.strategy.kind = kind;
        cfg.perception.sigma_px = 1.5;
        cfg.channel.jitter_db = 1.0;
        assert_eq!(bytes(&run_cfg(&cfg)), bytes(&run_cfg(&cfg)), "{kind:?}");
    }
}

#[test]
fn pipeline_stages_follow_each_other() {
    let cfg = ScenarioConfig::default();
    let s = cfg.build().unwrap();
    let r = run_cfg(&cfg);
    let b = s.budget;
    let at = |phase| r.events.iter().find(|e| e.transition == phase).unwrap().t;
    let blk = at(HoPhase::BlkDetected);
    // Detection lands exactly one transfer plus one detection after an odd frame.
    let k = ((blk - (b.t_rgb + b.t_odl).as_secs_f64()) * 26.0).round() as u64;
    assert_eq!(k % 2, 1);
    assert_eq!(
        SimTime::from_secs_f64(blk),
        frame_time(k) + b.t_rgb + b.t_odl
    );
    let waiting = at(HoPhase::Waiting);
    assert!((waiting - blk - b.t_inf.as_secs_f64()).abs() < 1e-9);
    let trig = at(HoPhase::HoTriggered);
    let done = at(HoPhase::HoComplete);
    assert!(trig >= waiting);
    assert!((done - trig - b.t_ho.as_secs_f64()).abs() < 1e-9);
    assert!(r.events.windows(2).all(|w| w[0].t <= w[1].t));
}

#[test]
fn reported_t_exec_matches_budget() {
    let r = run_cfg(&ScenarioConfig::default());
    let b = TimingBudget::default();
    let plan = r.plan.unwrap();
    assert_eq!(
        b.t_exec(plan.t_w),
        b.t_rgb + b.t_odl + b.t_inf + plan.t_w + b.t_ho
    );
    let e = r
        .events
        .iter()
        .find(|e| e.transition == HoPhase::HoComplete)
        .unwrap();
    assert_eq!(e.t_exec, Some(b.t_exec(plan.t_w).as_secs_f64()));
}

fn completion_rssi(offset: f64) -> f64 {
    let mut cfg = ScenarioConfig::default();
    cfg.strategy.trigger_offset_m = offset;
    run_cfg(&cfg).completion.unwrap().rssi_dbm
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn later_handover_is_never_weaker(a in -10.0..0.0f64, b in -10.0..0.0f64) {
        let (early, late) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(completion_rssi(early) <= completion_rssi(late) + 1e-12);
    }
}

proptest! {
    // A plan that proceeds never completes after the predicted entry.
    #[test]
    fn gate_never_completes_late(
        t_to_blk in 0.0..5.0f64,
        speed in 0.5..20.0f64,
        detected_ns in 0u64..10_000_000_000,
    ) {
        let b = TimingBudget::default();
        let at = SimTime::from_nanos(detected_ns);
        match plan_trigger(t_to_blk, &b, speed, at, SbsId(2)).unwrap() {
            TriggerDecision::Proceed(p) => {
                prop_assert!(p.complete_at <= at + pho_core::time::secs(t_to_blk));
                prop_assert_eq!(p.complete_at - at, b.t_exec(p.t_w));
                prop_assert!((p.trigger_distance_d - speed * p.t_w.as_secs_f64()).abs() < 1e-9);
            }
            TriggerDecision::Abort { .. } => prop_assert!(t_to_blk < b.t_s().as_secs_f64() + 1e-9),
        }
    }
}

//! Engine semantics: identity, barrier visibility, behavior-flag algebra,
//! scheduling frequencies, structural-change accounting, determinism.

use std::sync::Arc;

use rand::Rng;
use vivarium_core::event::SpawnAgentEvent;
use vivarium_core::math::sphere_volume;
use vivarium_core::rng::unit_vector;
use vivarium_core::*;

fn sim(seed: u64) -> Simulation<i64> {
    Simulation::new(SimParams::default(), seed)
}

fn sphere_at(x: f64, d: f64) -> Agent<i64> {
    Agent::sphere(Vec3::new(x, 0.0, 0.0), d, 0)
}

#[test]
fn first_insertion_gets_id_zero() {
    let mut s = sim(1);
    let id = s.add_agent(Agent::sphere(Vec3::ZERO, 10.0, 0)).unwrap();
    assert_eq!(id.raw(), 0);
    assert_eq!(s.population(), 1);
}

#[test]
fn identical_payloads_get_distinct_ids() {
    let mut s = sim(1);
    let a = s.add_agent(sphere_at(0.0, 5.0)).unwrap();
    let b = s.add_agent(sphere_at(0.0, 5.0)).unwrap();
    assert_ne!(a, b);
}

#[test]
fn invalid_geometry_is_rejected_with_diagnostic() {
    let mut s = sim(1);
    let err = s.add_agent(sphere_at(0.0, -3.0)).unwrap_err();
    assert!(matches!(err, EngineError::InvalidGeometry(_)));
    let err = s
        .add_agent(Agent::sphere(Vec3::new(f64::INFINITY, 0.0, 0.0), 1.0, 0))
        .unwrap_err();
    assert!(matches!(err, EngineError::InvalidGeometry(_)));
}

#[test]
fn removal_semantics_and_idempotence() {
    let mut s = sim(1);
    let a = s.add_agent(sphere_at(0.0, 5.0)).unwrap();
    let b = s.add_agent(sphere_at(3.0, 5.0)).unwrap();
    s.remove_agent(a);
    assert_eq!(s.population(), 1);
    assert!(s.neighbors_of(b, 5.0).unwrap().is_empty(), "removed agent must vanish from queries");
    assert_eq!(s.removal_warnings(), 0);
    s.remove_agent(a);
    assert_eq!(s.removal_warnings(), 1, "double removal warns and continues");
    assert_eq!(s.population(), 1);
}

/// Payload counts the neighbors each agent saw during the last behaviors run.
#[derive(Clone)]
struct SpawnAndCount;

impl Behavior<i64> for SpawnAndCount {
    fn run(&self, ctx: &mut AgentCtx<'_, i64>) -> Result<(), EngineError> {
        let mut seen = 0i64;
        ctx.snapshot.for_each_neighbor(ctx.index, 4.0, |_| seen += 1)?;
        *ctx.agent.payload = seen;
        if ctx.step == 0 && ctx.agent.id().raw() == 0 {
            let template = Agent::sphere(ctx.agent.position + Vec3::new(1.0, 0.0, 0.0), 1.0, -1);
            ctx.events.emit(SpawnAgentEvent::new(ctx.agent.id(), template));
        }
        Ok(())
    }
}

#[test]
fn mid_step_spawn_is_visible_only_after_the_barrier() {
    let mut s = Simulation::new(SimParams { min_box_edge: 4.0, ..SimParams::default() }, 7);
    let mut founder = Agent::sphere(Vec3::ZERO, 1.0, 0i64);
    founder.add_behavior(Arc::new(SpawnAndCount));
    let id = s.add_agent(founder).unwrap();
    s.add_operation(behaviors_op());

    s.step_once().unwrap();
    assert_eq!(s.population(), 2, "spawned agent exists after the barrier");
    assert_eq!(*s.agent(id).unwrap().payload, 0, "not visible to queries during its birth step");

    s.step_once().unwrap();
    assert_eq!(*s.agent(id).unwrap().payload, 1, "visible from the next step");
}

#[test]
fn division_volume_and_flag_truth_table() {
    // All four (copy, remove) combinations on one division event.
    #[derive(Clone)]
    struct Tag(&'static str, EventFlags);
    impl Behavior<i64> for Tag {
        fn run(&self, _ctx: &mut AgentCtx<'_, i64>) -> Result<(), EngineError> {
            Ok(())
        }
        fn flags(&self) -> EventFlags {
            self.1
        }
        fn name(&self) -> &str {
            self.0
        }
    }

    let mut s = sim(3);
    let mut parent = Agent::sphere(Vec3::ZERO, 10.0, 0i64);
    let k = EventKind::CellDivision;
    parent.add_behavior(Arc::new(Tag("keep", EventFlags::new())));
    parent.add_behavior(Arc::new(Tag("copy", EventFlags::new().copy_on(k))));
    parent.add_behavior(Arc::new(Tag("move", EventFlags::new().copy_on(k).remove_on(k))));
    parent.add_behavior(Arc::new(Tag("drop", EventFlags::new().remove_on(k))));
    let pid = s.add_agent(parent).unwrap();

    let ev = CellDivisionEvent::new(pid, 0.5, Vec3::new(1.0, 0.0, 0.0)).unwrap();
    let daughters = s.apply_event(&ev).unwrap();
    assert_eq!(daughters.len(), 1);

    let names = |id| -> Vec<&str> {
        s.agent(id).unwrap().behaviors().iter().map(|b| b.name()).collect()
    };
    assert_eq!(names(pid), vec!["keep", "copy"], "remove flags strip from parent");
    assert_eq!(names(daughters[0]), vec!["copy", "move"], "copy flags propagate to daughter");

    let expected = 10.0 * 0.5f64.cbrt();
    assert!((s.agent(pid).unwrap().diameter - expected).abs() < 1e-12);
    let total = s.agent(pid).unwrap().volume() + s.agent(daughters[0]).unwrap().volume();
    assert!(((total - sphere_volume(10.0)) / sphere_volume(10.0)).abs() < 1e-12);
}

#[test]
fn division_of_dead_parent_errors() {
    let mut s = sim(3);
    let pid = s.add_agent(sphere_at(0.0, 10.0)).unwrap();
    s.remove_agent(pid);
    let ev = CellDivisionEvent::new(pid, 0.5, Vec3::new(1.0, 0.0, 0.0)).unwrap();
    assert!(matches!(s.apply_event(&ev), Err(EngineError::DeadAgent(_))));
}

#[derive(Clone)]
struct DivideEveryStep;

impl Behavior<i64> for DivideEveryStep {
    fn run(&self, ctx: &mut AgentCtx<'_, i64>) -> Result<(), EngineError> {
        let axis = unit_vector(ctx.rng);
        let ev = CellDivisionEvent::new(ctx.agent.id(), 0.5, axis)?;
        ctx.events.emit(ev);
        Ok(())
    }
    fn flags(&self) -> EventFlags {
        EventFlags::new().copy_on(EventKind::CellDivision)
    }
}

#[test]
fn division_behavior_doubles_population_each_step() {
    let mut s = sim(11);
    let mut founder = Agent::sphere(Vec3::ZERO, 10.0, 0i64);
    founder.add_behavior(Arc::new(DivideEveryStep));
    s.add_agent(founder).unwrap();
    s.add_operation(behaviors_op());
    let report = s.simulate(3).unwrap();
    assert_eq!(report.population, 8, "2^3 doubling oracle");
    assert_eq!(report.births, 1 + 1 + 2 + 4);
    assert_eq!(report.deaths, 0);
}

#[test]
fn zero_steps_change_nothing() {
    let mut s = sim(5);
    s.add_agent(sphere_at(0.0, 2.0)).unwrap();
    s.add_operation(behaviors_op());
    let report = s.simulate(0).unwrap();
    assert_eq!(report.population, 1);
    assert_eq!(report.steps, 0);
}

#[test]
fn frequency_two_standalone_runs_five_times_in_ten_steps() {
    let mut s = sim(5);
    s.add_agent(sphere_at(0.0, 2.0)).unwrap();
    let count = Arc::new(std::sync::atomic::AtomicU64::new(0));
    let c2 = count.clone();
    s.add_operation(Operation::standalone("tick", 2, move |_ctx: &mut StandaloneCtx<'_, i64>| {
        c2.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        Ok(())
    }));
    s.simulate(10).unwrap();
    assert_eq!(count.load(std::sync::atomic::Ordering::Relaxed), 5);
}

#[test]
fn population_accounting_balances() {
    // Some agents divide, some request removal; live = before + births - deaths.
    #[derive(Clone)]
    struct DivideOrDie;
    impl Behavior<i64> for DivideOrDie {
        fn run(&self, ctx: &mut AgentCtx<'_, i64>) -> Result<(), EngineError> {
            if ctx.agent.id().raw() % 3 == 0 && ctx.step == 0 {
                let ev = CellDivisionEvent::new(ctx.agent.id(), 0.5, Vec3::new(0.0, 0.0, 1.0))?;
                ctx.events.emit(ev);
            } else if ctx.agent.id().raw() % 3 == 1 {
                ctx.events.request_removal(ctx.agent.id());
            }
            Ok(())
        }
    }

    let mut s = sim(9);
    for i in 0..30 {
        let mut a = sphere_at(i as f64 * 20.0, 10.0);
        a.add_behavior(Arc::new(DivideOrDie));
        s.add_agent(a).unwrap();
    }
    let before = s.population() as i64;
    let b0 = 30;
    s.step_once().unwrap();
    let report = s.report();
    let births = report.births as i64 - b0;
    let deaths = report.deaths as i64;
    assert_eq!(births, 10);
    assert_eq!(deaths, 10);
    assert_eq!(s.population() as i64, before + births - deaths);
}

#[derive(Clone)]
struct RandomWalk;

impl Behavior<i64> for RandomWalk {
    fn run(&self, ctx: &mut AgentCtx<'_, i64>) -> Result<(), EngineError> {
        let step = unit_vector(ctx.rng) * ctx.rng.gen_range(0.0..0.5);
        ctx.agent.position += step;
        Ok(())
    }
}

fn walk_sim(seed: u64, parallel: bool) -> Simulation<i64> {
    let mut s = Simulation::new(
        SimParams { parallel, ..SimParams::default() },
        seed,
    );
    for i in 0..200 {
        let mut a = Agent::sphere(Vec3::new(i as f64 % 20.0, (i / 20) as f64, 0.0), 0.8, 0i64);
        a.add_behavior(Arc::new(RandomWalk));
        s.add_agent(a).unwrap();
    }
    s.add_operation(behaviors_op());
    s.add_operation(mechanics_op());
    s
}

#[test]
fn fixed_seed_runs_are_bit_identical() {
    let mut a = walk_sim(42, false);
    let mut b = walk_sim(42, false);
    a.simulate(25).unwrap();
    b.simulate(25).unwrap();
    for (x, y) in a.agents().iter().zip(b.agents()) {
        assert_eq!(x.id(), y.id());
        assert_eq!(x.position.to_array(), y.position.to_array());
    }
}

#[test]
fn parallel_and_sequential_runs_agree_bitwise() {
    let mut seq = walk_sim(42, false);
    let mut par = walk_sim(42, true);
    seq.simulate(25).unwrap();
    par.simulate(25).unwrap();
    for (x, y) in seq.agents().iter().zip(par.agents()) {
        assert_eq!(x.position.to_array(), y.position.to_array());
    }
}

#[test]
fn different_seeds_diverge() {
    let mut a = walk_sim(1, false);
    let mut b = walk_sim(2, false);
    a.simulate(5).unwrap();
    b.simulate(5).unwrap();
    let same = a
        .agents()
        .iter()
        .zip(b.agents())
        .all(|(x, y)| x.position.to_array() == y.position.to_array());
    assert!(!same);
}

#[derive(Clone)]
struct FailAt(u64);

impl Behavior<i64> for FailAt {
    fn run(&self, ctx: &mut AgentCtx<'_, i64>) -> Result<(), EngineError> {
        if ctx.step == 2 && ctx.agent.id().raw() == self.0 {
            return Err(EngineError::Model("intentional failure".to_string()));
        }
        Ok(())
    }
}

#[test]
fn behavior_errors_abort_with_step_and_agent() {
    let mut s = sim(2);
    for i in 0..10 {
        let mut a = sphere_at(i as f64 * 5.0, 2.0);
        a.add_behavior(Arc::new(FailAt(4)));
        s.add_agent(a).unwrap();
    }
    s.add_operation(behaviors_op());
    let err = s.simulate(10).unwrap_err();
    match err {
        EngineError::Op { op, step, agent, .. } => {
            assert_eq!(op, "behaviors");
            assert_eq!(step, 2);
            assert_eq!(agent.map(|a| a.raw()), Some(4));
        }
        other => panic!("unexpected error shape: {other}"),
    }
}

#[test]
fn behaviors_attached_mid_step_start_next_step() {
    // An attacher behavior adds a mover behavior to its own agent; the mover
    // must not run within the same step.
    #[derive(Clone)]
    struct Mover;
    impl Behavior<i64> for Mover {
        fn run(&self, ctx: &mut AgentCtx<'_, i64>) -> Result<(), EngineError> {
            ctx.agent.position.z += 1.0;
            Ok(())
        }
    }
    #[derive(Clone)]
    struct Attacher;
    impl Behavior<i64> for Attacher {
        fn run(&self, ctx: &mut AgentCtx<'_, i64>) -> Result<(), EngineError> {
            if ctx.step == 0 {
                ctx.agent.add_behavior(Arc::new(Mover));
            }
            Ok(())
        }
    }

    let mut s = sim(4);
    let mut a = sphere_at(0.0, 2.0);
    a.add_behavior(Arc::new(Attacher));
    let id = s.add_agent(a).unwrap();
    s.add_operation(behaviors_op());
    s.step_once().unwrap();
    assert_eq!(s.agent(id).unwrap().position.z, 0.0, "mid-step attachment deferred");
    s.step_once().unwrap();
    assert_eq!(s.agent(id).unwrap().position.z, 1.0);
}

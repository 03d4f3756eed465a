//! The simulation: agent population, fields, operation schedule, and the
//! two-phase step loop (parallel agent phases separated by serial barriers).

use std::time::{Duration, Instant};

use rand::rngs::SmallRng;

use crate::agent::{Agent, AgentId, Payload};
use crate::diffusion::{DiffusionGrid, Fields};
use crate::error::EngineError;
use crate::event::{CreationEvent, EventSink, Failure, IdAlloc, StepBuffers};
use crate::exec;
use crate::grid::GridSummary;
use crate::math::Vec3;
use crate::mechanics::MechanicsParams;
use crate::rng::RandomStream;
use crate::schedule::{AgentCtx, AgentOpFn, OpKind, Operation, StandaloneCtx};
use crate::snapshot::Snapshot;
use crate::store::AgentStore;

#[derive(Clone, Copy, Debug)]
pub struct SimParams {
    /// Simulated time units per step.
    pub dt: f64,
    /// Lower bound for the grid box edge; raise to the interaction radius a
    /// scenario needs so neighbor queries stay within one box hull.
    pub min_box_edge: f64,
    /// Motion threshold for stationary-region detection, µm.
    pub eps_move: f64,
    /// Skip force computation for agents in stationary regions.
    pub stationary_skip: bool,
    /// Run agent phases on the rayon pool (no effect without the `parallel`
    /// feature; `false` selects the sequential fallback path at runtime).
    pub parallel: bool,
    pub mechanics: MechanicsParams,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            dt: 1.0,
            min_box_edge: 1.0,
            eps_move: 1e-9,
            stationary_skip: false,
            parallel: cfg!(feature = "parallel"),
            mechanics: MechanicsParams::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SimulationReport {
    pub steps: u64,
    pub population: usize,
    pub births: u64,
    pub deaths: u64,
    /// Accumulated wall time per operation, in schedule order.
    pub op_wall: Vec<(String, Duration)>,
}

struct PrevState {
    summary: GridSummary,
    /// Step-start positions indexed by raw agent id.
    positions: Vec<Vec3>,
}

pub struct Simulation<P: Payload> {
    params: SimParams,
    rng: RandomStream,
    master: SmallRng,
    store: AgentStore<P>,
    fields: Fields,
    schedule: Vec<Operation<P>>,
    step: u64,
    prev: Option<PrevState>,
    removal_warnings: u64,
}

impl<P: Payload> Simulation<P> {
    pub fn new(params: SimParams, seed: u64) -> Self {
        let rng = RandomStream::new(seed);
        Simulation {
            master: rng.master(),
            params,
            rng,
            store: AgentStore::new(),
            fields: Fields::new(),
            schedule: Vec::new(),
            step: 0,
            prev: None,
            removal_warnings: 0,
        }
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn set_parallel(&mut self, parallel: bool) {
        self.params.parallel = parallel;
    }

    pub fn random_stream(&self) -> RandomStream {
        self.rng
    }

    /// Serial master stream for initialization-time sampling.
    pub fn master_rng(&mut self) -> &mut SmallRng {
        &mut self.master
    }

    pub fn current_step(&self) -> u64 {
        self.step
    }

    pub fn population(&self) -> usize {
        self.store.len()
    }

    pub fn removal_warnings(&self) -> u64 {
        self.removal_warnings
    }

    /// Adds an agent immediately (initialization path). During a step,
    /// behaviors enqueue creation events instead, which take effect at the
    /// next barrier.
    pub fn add_agent(&mut self, agent: Agent<P>) -> Result<AgentId, EngineError> {
        self.store.insert(agent)
    }

    /// Removes an agent immediately. Unknown or already-dead ids are a
    /// warning, not an error.
    pub fn remove_agent(&mut self, id: AgentId) {
        if !self.store.remove_now(id) {
            self.removal_warnings += 1;
            log::warn!("removal of non-live agent {} ignored", id.raw());
        }
    }

    pub fn agent(&self, id: AgentId) -> Option<&Agent<P>> {
        self.store.get(id)
    }

    pub fn agent_mut(&mut self, id: AgentId) -> Option<&mut Agent<P>> {
        self.store.get_mut(id)
    }

    pub fn agents(&self) -> &[Agent<P>] {
        self.store.agents()
    }

    pub fn store(&self) -> &AgentStore<P> {
        &self.store
    }

    pub fn add_operation(&mut self, op: Operation<P>) {
        self.schedule.push(op);
    }

    /// Registers a diffusion field after checking explicit-Euler stability
    /// against the simulation timestep.
    pub fn add_field(&mut self, grid: DiffusionGrid) -> Result<(), EngineError> {
        grid.validate_dt(self.params.dt)?;
        self.fields.insert(grid)
    }

    pub fn field(&self, name: &str) -> Option<&DiffusionGrid> {
        self.fields.get(name)
    }

    pub fn field_mut(&mut self, name: &str) -> Option<&mut DiffusionGrid> {
        self.fields.get_mut(name)
    }

    pub fn fields(&self) -> &Fields {
        &self.fields
    }

    /// Applies a creation event immediately (initialization path; during a
    /// step, events are queued through the context sink and applied at the
    /// barrier). Returns the new agents' ids.
    pub fn apply_event(&mut self, event: &dyn CreationEvent<P>) -> Result<Vec<AgentId>, EngineError> {
        let parent_id = event.parent();
        let slot = self
            .store
            .slot_of(parent_id)
            .ok_or(EngineError::DeadAgent(parent_id))?;

        let mut next = *self.store.next_id_mut();
        let new_agents = {
            let parent = &mut self.store.agents_mut()[slot];
            let mut alloc = IdAlloc::new(&mut next);
            event.apply(parent, &mut alloc)?
        };
        *self.store.next_id_mut() = next;

        let kind = event.kind();
        let inherit = event.inherit_behaviors();
        let copied: Vec<_> = if inherit {
            let parent = &mut self.store.agents_mut()[slot];
            let copied = parent
                .behaviors()
                .iter()
                .filter(|b| b.flags().copies(kind))
                .cloned()
                .collect();
            parent.behaviors_mut().retain(|b| !b.flags().removes(kind));
            copied
        } else {
            Vec::new()
        };

        let mut ids = Vec::with_capacity(new_agents.len());
        for mut agent in new_agents {
            for b in &copied {
                agent.add_behavior(b.clone());
            }
            ids.push(self.store.insert(agent)?);
        }
        Ok(ids)
    }

    /// Builds a fresh snapshot of the current state (for inspection and
    /// tests; the step loop builds its own).
    pub fn make_snapshot(&self) -> Snapshot<P> {
        Snapshot::build(&self.store, self.params.min_box_edge, self.params.parallel, None)
    }

    /// Ids of neighbors within `radius` of the given live agent, against the
    /// current state.
    pub fn neighbors_of(&self, id: AgentId, radius: f64) -> Result<Vec<AgentId>, EngineError> {
        let snapshot = self.make_snapshot();
        let index = snapshot.index_of(id).ok_or(EngineError::DeadAgent(id))?;
        let mut out = Vec::new();
        snapshot.for_each_neighbor(index, radius, |j| out.push(snapshot.id(j)))?;
        Ok(out)
    }

    pub fn step_once(&mut self) -> Result<(), EngineError> {
        let tracking = self
            .prev
            .as_ref()
            .map(|p| (&p.summary, p.positions.as_slice(), self.params.eps_move));
        let snapshot =
            Snapshot::build(&self.store, self.params.min_box_edge, self.params.parallel, tracking);

        let mut bufs: StepBuffers<P> = StepBuffers::default();
        let mut schedule = std::mem::take(&mut self.schedule);
        let mut failed: Option<EngineError> = None;

        for (op_index, op) in schedule.iter_mut().enumerate() {
            if self.step % op.frequency != 0 {
                continue;
            }
            let started = Instant::now();
            let result = match &mut op.kind {
                OpKind::Agent(f) => {
                    let produced = run_agent_op(
                        &mut self.store,
                        &snapshot,
                        &self.fields,
                        &self.params,
                        &self.rng,
                        self.step,
                        op_index as u64,
                        f.as_ref(),
                    );
                    match produced.failure {
                        Some(Failure { agent, error, .. }) => {
                            Err(error.in_op(&op.name, self.step, Some(agent)))
                        }
                        None => {
                            bufs.events.extend(produced.events);
                            bufs.removals.extend(produced.removals);
                            Ok(())
                        }
                    }
                }
                OpKind::Standalone(f) => {
                    let mut rng = self.rng.standalone(self.step, op_index as u64);
                    let StepBuffers { events, removals, .. } = &mut bufs;
                    let mut ctx = StandaloneCtx {
                        store: &mut self.store,
                        fields: &mut self.fields,
                        snapshot: &snapshot,
                        params: &self.params,
                        step: self.step,
                        rng: &mut rng,
                        events: EventSink { events, removals },
                    };
                    f(&mut ctx).map_err(|e| e.in_op(&op.name, self.step, None))
                }
            };
            op.wall += started.elapsed();
            if let Err(e) = result {
                failed = Some(e);
                break;
            }
        }
        self.schedule = schedule;
        if let Some(e) = failed {
            return Err(e);
        }

        // Retain the step-start view for next step's stationary detection
        // before structural changes land.
        if self.params.stationary_skip {
            let cap = snapshot.len().checked_sub(1).map(|i| snapshot.id(i).raw() as usize + 1);
            let mut positions = vec![Vec3::ZERO; cap.unwrap_or(0)];
            for i in 0..snapshot.len() {
                positions[snapshot.id(i).raw() as usize] = snapshot.position(i);
            }
            self.prev = Some(PrevState { summary: snapshot.grid().summary(), positions });
        }

        self.apply_barrier(bufs)?;
        self.step += 1;
        Ok(())
    }

    /// Runs `steps` barriers of the configured schedule.
    pub fn simulate(&mut self, steps: u64) -> Result<SimulationReport, EngineError> {
        for _ in 0..steps {
            self.step_once()?;
        }
        Ok(self.report())
    }

    pub fn report(&self) -> SimulationReport {
        SimulationReport {
            steps: self.step,
            population: self.store.len(),
            births: self.store.births(),
            deaths: self.store.deaths(),
            op_wall: self.schedule.iter().map(|op| (op.name.clone(), op.wall)).collect(),
        }
    }

    /// Births first (so a divide-and-die step still produces the daughter),
    /// then removals; both merged deterministically.
    fn apply_barrier(&mut self, mut bufs: StepBuffers<P>) -> Result<(), EngineError> {
        if !bufs.events.is_empty() {
            bufs.events.sort_by(|a, b| a.parent().cmp(&b.parent()));
            for event in std::mem::take(&mut bufs.events) {
                self.apply_event(event.as_ref())?;
            }
        }
        if !bufs.removals.is_empty() {
            bufs.removals.sort();
            let before = bufs.removals.len();
            bufs.removals.dedup();
            let duplicates = (before - bufs.removals.len()) as u64;
            if duplicates > 0 {
                self.removal_warnings += duplicates;
                log::warn!("{duplicates} duplicate removal request(s) collapsed at barrier");
            }
            for &id in &bufs.removals {
                if !self.store.is_live(id) {
                    self.removal_warnings += 1;
                    log::warn!("removal of non-live agent {} ignored", id.raw());
                }
            }
            self.store.remove_batch(&bufs.removals);
        }
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn run_agent_op<P: Payload>(
    store: &mut AgentStore<P>,
    snapshot: &Snapshot<P>,
    fields: &Fields,
    params: &SimParams,
    stream: &RandomStream,
    step: u64,
    channel: u64,
    op: &AgentOpFn<P>,
) -> StepBuffers<P> {
    exec::fold_slices(
        store.agents_mut(),
        params.parallel,
        StepBuffers::default,
        |mut bufs, index, agent| {
            if bufs.failure.is_some() {
                return bufs;
            }
            let id = agent.id();
            let mut rng = stream.agent(id, step, channel);
            {
                let StepBuffers { events, removals, failure } = &mut bufs;
                let mut ctx = AgentCtx {
                    agent,
                    index,
                    snapshot,
                    fields,
                    params,
                    step,
                    rng: &mut rng,
                    events: EventSink { events, removals },
                };
                if let Err(error) = op(&mut ctx) {
                    *failure = Some(Failure { agent_index: index, agent: id, error });
                }
            }
            bufs
        },
        StepBuffers::merge,
    )
}

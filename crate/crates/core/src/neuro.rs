//! Neuroscience extension: somata plus binary trees of cylindrical neurite
//! elements. Each element is a spring with a point mass at its distal end;
//! springs chain through the tree to transmit forces. Structural changes
//! (extension, bifurcation, side branches, length splits) are creation
//! events applied at the step barrier.

use crate::agent::{Agent, AgentId, Payload, Shape};
use crate::behavior::EventKind;
use crate::error::EngineError;
use crate::event::{CreationEvent, IdAlloc};
use crate::math::Vec3;
use crate::mechanics::sphere_segment_force;
use crate::schedule::{AgentCtx, Operation};
use crate::sim::Simulation;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Lineage {
    Apical,
    Basal,
}

/// What an element's proximal endpoint is attached to.
#[derive(Clone, Debug)]
pub enum Attachment {
    /// Root element anchored on a soma surface; `anchor` is the unit vector
    /// from the soma center to the attachment point.
    Soma { soma: AgentId, anchor: Vec3 },
    Element(AgentId),
}

impl Attachment {
    pub fn mother_id(&self) -> AgentId {
        match self {
            Attachment::Soma { soma, .. } => *soma,
            Attachment::Element(id) => *id,
        }
    }
}

#[derive(Clone, Debug)]
pub struct NeuriteData {
    pub mother: Attachment,
    /// Binary tree: up to two daughter elements.
    pub daughters: [Option<AgentId>; 2],
    /// Spring rest length, µm.
    pub resting_length: f64,
    pub lineage: Lineage,
    pub on_main_branch: bool,
}

impl NeuriteData {
    pub fn is_terminal(&self) -> bool {
        self.daughters[0].is_none() && self.daughters[1].is_none()
    }

    pub fn daughter_count(&self) -> usize {
        self.daughters.iter().filter(|d| d.is_some()).count()
    }

    pub fn daughter_ids(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.daughters.iter().flatten().copied()
    }

    fn add_daughter(&mut self, id: AgentId) -> Result<(), EngineError> {
        for slot in self.daughters.iter_mut() {
            if slot.is_none() {
                *slot = Some(id);
                return Ok(());
            }
        }
        Err(EngineError::InvalidEvent(
            "element already has two daughters (binary tree)".to_string(),
        ))
    }
}

#[derive(Clone, Debug, Default)]
pub struct SomaData {
    pub roots: Vec<AgentId>,
}

/// Ready-made payload for purely neuronal simulations.
#[derive(Clone, Debug)]
pub enum NeuroPayload {
    Soma(SomaData),
    Neurite(NeuriteData),
}

/// Payloads that can host the neuroscience extension.
pub trait NeuroView: Payload {
    fn as_soma(&self) -> Option<&SomaData>;
    fn as_soma_mut(&mut self) -> Option<&mut SomaData>;
    fn as_neurite(&self) -> Option<&NeuriteData>;
    fn as_neurite_mut(&mut self) -> Option<&mut NeuriteData>;
    fn from_neurite(data: NeuriteData) -> Self;
}

impl NeuroView for NeuroPayload {
    fn as_soma(&self) -> Option<&SomaData> {
        match self {
            NeuroPayload::Soma(s) => Some(s),
            _ => None,
        }
    }

    fn as_soma_mut(&mut self) -> Option<&mut SomaData> {
        match self {
            NeuroPayload::Soma(s) => Some(s),
            _ => None,
        }
    }

    fn as_neurite(&self) -> Option<&NeuriteData> {
        match self {
            NeuroPayload::Neurite(n) => Some(n),
            _ => None,
        }
    }

    fn as_neurite_mut(&mut self) -> Option<&mut NeuriteData> {
        match self {
            NeuroPayload::Neurite(n) => Some(n),
            _ => None,
        }
    }

    fn from_neurite(data: NeuriteData) -> Self {
        NeuroPayload::Neurite(data)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct NeuroParams {
    /// Elements at this diameter stop elongating, µm.
    pub min_diameter: f64,
    /// Elements longer than this split into two chained elements, µm.
    pub max_element_length: f64,
    /// Axial spring constant, force per unit strain.
    pub spring_k: f64,
    /// Daughter diameter multiplier at branch points.
    pub branch_diameter_ratio: f64,
    /// Length of freshly created elements, µm.
    pub initial_length: f64,
    /// Diameter shrinkage per µm elongated.
    pub taper_rate: f64,
}

impl Default for NeuroParams {
    fn default() -> Self {
        NeuroParams {
            min_diameter: 0.5,
            max_element_length: 10.0,
            spring_k: 10.0,
            branch_diameter_ratio: 0.7,
            initial_length: 0.5,
            taper_rate: 0.001,
        }
    }
}

fn neurite_of<P: NeuroView>(agent: &Agent<P>) -> Result<&NeuriteData, EngineError> {
    agent
        .payload
        .as_neurite()
        .ok_or_else(|| EngineError::InvalidEvent("agent is not a neurite element".to_string()))
}

fn endpoints_of<P>(agent: &Agent<P>) -> Result<(Vec3, Vec3), EngineError> {
    agent
        .endpoints()
        .ok_or_else(|| EngineError::InvalidEvent("neurite element must be a cylinder".to_string()))
}

// ---------------------------------------------------------------------------
// Creation events
// ---------------------------------------------------------------------------

/// Sprouts a new root element from a soma surface.
pub struct ExtendNeuriteEvent {
    soma: AgentId,
    direction: Vec3,
    diameter: f64,
    lineage: Lineage,
    initial_length: f64,
}

impl ExtendNeuriteEvent {
    pub fn new(
        soma: AgentId,
        direction: Vec3,
        diameter: f64,
        lineage: Lineage,
        params: &NeuroParams,
    ) -> Result<Self, EngineError> {
        if direction.normalized().is_none() {
            return Err(EngineError::InvalidEvent("extension direction must be non-zero".into()));
        }
        if diameter <= params.min_diameter {
            return Err(EngineError::InvalidEvent(format!(
                "initial neurite diameter {diameter} must exceed min diameter {}",
                params.min_diameter
            )));
        }
        Ok(ExtendNeuriteEvent {
            soma,
            direction,
            diameter,
            lineage,
            initial_length: params.initial_length,
        })
    }
}

impl<P: NeuroView> CreationEvent<P> for ExtendNeuriteEvent {
    fn kind(&self) -> EventKind {
        EventKind::NeuriteExtension
    }

    fn parent(&self) -> AgentId {
        self.soma
    }

    fn apply(
        &self,
        parent: &mut Agent<P>,
        ids: &mut IdAlloc<'_>,
    ) -> Result<Vec<Agent<P>>, EngineError> {
        let anchor = self.direction.normalized().expect("validated");
        let surface = parent.position + anchor * parent.radius();
        let soma_id = parent.id();
        let soma = parent
            .payload
            .as_soma_mut()
            .ok_or_else(|| EngineError::InvalidEvent("extension parent must be a soma".into()))?;
        let id = ids.allocate();
        soma.roots.push(id);
        let data = NeuriteData {
            mother: Attachment::Soma { soma: soma_id, anchor },
            daughters: [None, None],
            resting_length: self.initial_length,
            lineage: self.lineage,
            on_main_branch: self.lineage == Lineage::Apical,
        };
        let mut agent = Agent::cylinder(
            surface,
            surface + anchor * self.initial_length,
            self.diameter,
            P::from_neurite(data),
        );
        agent.set_id(id);
        Ok(vec![agent])
    }
}

/// Terminal bifurcation into two daughters. Exactly one daughter of an
/// apical main-branch parent continues the main branch: the one whose
/// direction is closest to the parent axis.
pub struct BifurcateEvent {
    element: AgentId,
    dir_a: Vec3,
    dir_b: Vec3,
    params: NeuroParams,
}

impl BifurcateEvent {
    pub fn new(
        element: AgentId,
        dir_a: Vec3,
        dir_b: Vec3,
        params: &NeuroParams,
    ) -> Result<Self, EngineError> {
        if dir_a.normalized().is_none() || dir_b.normalized().is_none() {
            return Err(EngineError::InvalidEvent("branch directions must be non-zero".into()));
        }
        Ok(BifurcateEvent { element, dir_a, dir_b, params: *params })
    }
}

impl<P: NeuroView> CreationEvent<P> for BifurcateEvent {
    fn kind(&self) -> EventKind {
        EventKind::NeuriteBifurcation
    }

    fn parent(&self) -> AgentId {
        self.element
    }

    fn apply(
        &self,
        parent: &mut Agent<P>,
        ids: &mut IdAlloc<'_>,
    ) -> Result<Vec<Agent<P>>, EngineError> {
        let (prox, dist) = endpoints_of(parent)?;
        let parent_id = parent.id();
        let parent_diameter = parent.diameter;
        {
            let data = neurite_of(parent)?;
            if !data.is_terminal() {
                return Err(EngineError::InvalidEvent(
                    "bifurcation requires a terminal element".to_string(),
                ));
            }
        }
        let axis = (dist - prox).normalized().unwrap_or(Vec3::new(0.0, 0.0, 1.0));
        let a = self.dir_a.normalized().expect("validated");
        let b = self.dir_b.normalized().expect("validated");
        let daughter_diameter =
            (parent_diameter * self.params.branch_diameter_ratio).max(self.params.min_diameter);

        let data = parent.payload.as_neurite_mut().expect("checked above");
        let lineage = data.lineage;
        let parent_main = data.on_main_branch && lineage == Lineage::Apical;
        // Main-branch inheritance: the daughter closest to the parent axis.
        let a_is_main = parent_main && a.dot(axis) >= b.dot(axis);
        let b_is_main = parent_main && !a_is_main;

        let mut daughters = Vec::with_capacity(2);
        let mut ids_out = [AgentId::from_raw(0); 2];
        for (slot, (dir, main)) in [(a, a_is_main), (b, b_is_main)].into_iter().enumerate() {
            let id = ids.allocate();
            ids_out[slot] = id;
            let child = NeuriteData {
                mother: Attachment::Element(parent_id),
                daughters: [None, None],
                resting_length: self.params.initial_length,
                lineage,
                on_main_branch: main,
            };
            let mut agent = Agent::cylinder(
                dist,
                dist + dir * self.params.initial_length,
                daughter_diameter,
                P::from_neurite(child),
            );
            agent.set_id(id);
            daughters.push(agent);
        }
        data.daughters = [Some(ids_out[0]), Some(ids_out[1])];
        Ok(daughters)
    }
}

/// Adds a second daughter to a non-terminal element with a free slot.
pub struct SideBranchEvent {
    element: AgentId,
    direction: Vec3,
    params: NeuroParams,
}

impl SideBranchEvent {
    pub fn new(
        element: AgentId,
        direction: Vec3,
        params: &NeuroParams,
    ) -> Result<Self, EngineError> {
        if direction.normalized().is_none() {
            return Err(EngineError::InvalidEvent("branch direction must be non-zero".into()));
        }
        Ok(SideBranchEvent { element, direction, params: *params })
    }
}

impl<P: NeuroView> CreationEvent<P> for SideBranchEvent {
    fn kind(&self) -> EventKind {
        EventKind::NeuriteSideBranch
    }

    fn parent(&self) -> AgentId {
        self.element
    }

    fn apply(
        &self,
        parent: &mut Agent<P>,
        ids: &mut IdAlloc<'_>,
    ) -> Result<Vec<Agent<P>>, EngineError> {
        let (_, dist) = endpoints_of(parent)?;
        let parent_id = parent.id();
        let parent_diameter = parent.diameter;
        let dir = self.direction.normalized().expect("validated");
        let data = parent
            .payload
            .as_neurite_mut()
            .ok_or_else(|| EngineError::InvalidEvent("agent is not a neurite element".into()))?;
        if data.is_terminal() {
            return Err(EngineError::InvalidEvent(
                "side branches apply to non-terminal elements (bifurcate terminals instead)"
                    .to_string(),
            ));
        }
        let lineage = data.lineage;
        let id = ids.allocate();
        data.add_daughter(id)?;
        let child = NeuriteData {
            mother: Attachment::Element(parent_id),
            daughters: [None, None],
            resting_length: self.params.initial_length,
            lineage,
            on_main_branch: false,
        };
        let mut agent = Agent::cylinder(
            dist,
            dist + dir * self.params.initial_length,
            (parent_diameter * self.params.branch_diameter_ratio).max(self.params.min_diameter),
            P::from_neurite(child),
        );
        agent.set_id(id);
        Ok(vec![agent])
    }
}

/// Splits an over-long terminal element at its midpoint; the new agent takes
/// the distal half (and the terminal role), the parent keeps the proximal
/// half. Tree depth grows by one without touching any third agent.
pub struct SplitElementEvent {
    element: AgentId,
}

impl SplitElementEvent {
    pub fn new(element: AgentId) -> Self {
        SplitElementEvent { element }
    }
}

impl<P: NeuroView> CreationEvent<P> for SplitElementEvent {
    fn kind(&self) -> EventKind {
        EventKind::NeuriteSplit
    }

    fn parent(&self) -> AgentId {
        self.element
    }

    fn apply(
        &self,
        parent: &mut Agent<P>,
        ids: &mut IdAlloc<'_>,
    ) -> Result<Vec<Agent<P>>, EngineError> {
        let (prox, dist) = endpoints_of(parent)?;
        let parent_id = parent.id();
        let diameter = parent.diameter;
        {
            let data = neurite_of(parent)?;
            if !data.is_terminal() {
                return Err(EngineError::InvalidEvent(
                    "only terminal elements split during elongation".to_string(),
                ));
            }
        }
        let mid = prox.midpoint(dist);
        parent.set_endpoints(prox, mid);
        let data = parent.payload.as_neurite_mut().expect("checked above");
        data.resting_length *= 0.5;
        let id = ids.allocate();
        let child = NeuriteData {
            mother: Attachment::Element(parent_id),
            daughters: [None, None],
            resting_length: data.resting_length,
            lineage: data.lineage,
            on_main_branch: data.on_main_branch,
        };
        data.daughters[0] = Some(id);
        let mut agent = Agent::cylinder(mid, dist, diameter, P::from_neurite(child));
        agent.set_id(id);
        Ok(vec![agent])
    }
}

// ---------------------------------------------------------------------------
// Per-step ops
// ---------------------------------------------------------------------------

/// Advances a terminal element's distal endpoint by speed·Δt along
/// `direction`; resting length tracks the actual length and the diameter
/// tapers per µm elongated, floored at the minimum (where growth arrests
/// silently). Enqueues a split event when the element exceeds its maximum
/// length.
pub fn elongate_terminal<P: NeuroView>(
    ctx: &mut AgentCtx<'_, P>,
    speed: f64,
    direction: Vec3,
    params: &NeuroParams,
) -> Result<(), EngineError> {
    let dt = ctx.dt();
    let id = ctx.agent.id();
    let (prox, dist) = endpoints_of(ctx.agent)?;
    {
        let data = neurite_of(ctx.agent)?;
        if !data.is_terminal() {
            return Err(EngineError::Model("elongation requires a terminal element".to_string()));
        }
    }
    if ctx.agent.diameter <= params.min_diameter {
        return Ok(()); // growth arrest
    }
    let dir = direction
        .normalized()
        .ok_or_else(|| EngineError::InvalidParameter("zero elongation direction".to_string()))?;
    let delta = speed * dt;
    let old_len = (dist - prox).norm();
    let new_dist = dist + dir * delta;
    let new_len = (new_dist - prox).norm();

    ctx.agent.set_endpoints(prox, new_dist);
    ctx.agent.diameter = (ctx.agent.diameter - params.taper_rate * delta).max(params.min_diameter);
    let data = ctx.agent.payload.as_neurite_mut().expect("checked above");
    data.resting_length = (data.resting_length + (new_len - old_len)).max(1e-6);

    if new_len > params.max_element_length {
        ctx.events.emit(SplitElementEvent::new(id));
    }
    Ok(())
}

/// Spring-chain mechanics for neurite elements: each distal point mass
/// accumulates its own spring tension, its daughters' tensions, and
/// sphere–cylinder contact forces (excluding the soma it is anchored to),
/// then moves overdamped. All forces are computed from the step-start
/// snapshot so action–reaction pairs cancel exactly.
pub fn neurite_mechanics_op<P: NeuroView>(params: NeuroParams) -> Operation<P> {
    Operation::agent("neurite_mechanics", 1, move |ctx: &mut AgentCtx<'_, P>| {
        if ctx.agent.payload.as_neurite().is_none() {
            return Ok(());
        }
        let snap = ctx.snapshot;
        let i = ctx.index;
        let my = snap
            .payload(i)
            .as_neurite()
            .expect("payload mismatch between snapshot and live agent");
        if my.resting_length <= 0.0 {
            return Err(EngineError::Model(format!(
                "non-positive resting length on element {}",
                ctx.agent.id().raw()
            )));
        }
        let (prox, dist) = match snap.shape(i) {
            Shape::Cylinder { proximal, distal } => (*proximal, *distal),
            Shape::Sphere => return Ok(()),
        };

        let spring = |p: Vec3, d: Vec3, resting: f64| -> Vec3 {
            // Force the spring exerts on its distal end: pulls toward the
            // proximal end when stretched.
            let axis = d - p;
            let len = axis.norm();
            if len <= 0.0 {
                return Vec3::ZERO;
            }
            let strain = (len - resting) / resting;
            axis * (-params.spring_k * strain / len)
        };

        let mut force = spring(prox, dist, my.resting_length);

        // Daughter springs act on the shared joint (this element's distal).
        for daughter in my.daughter_ids() {
            if let Some(j) = snap.index_of(daughter) {
                if let (Shape::Cylinder { proximal, distal }, Some(dd)) =
                    (snap.shape(j), snap.payload(j).as_neurite())
                {
                    force -= spring(*proximal, *distal, dd.resting_length);
                }
            }
        }

        // Contacts with spheres (other somata, cells), except the anchor soma.
        let excluded_soma = match &my.mother {
            Attachment::Soma { soma, .. } => Some(*soma),
            Attachment::Element(_) => None,
        };
        let radius = snap.grid().edge();
        let my_id = snap.id(i);
        let my_diameter = snap.diameter(i);
        ctx.snapshot.for_each_neighbor(i, radius, |j| {
            if let Shape::Sphere = snap.shape(j) {
                if Some(snap.id(j)) == excluded_soma {
                    return;
                }
                let (f, _) = sphere_segment_force(
                    snap.position(j),
                    snap.diameter(j),
                    snap.id(j),
                    prox,
                    dist,
                    my_diameter,
                    my_id,
                    &ctx.params.mechanics,
                );
                force -= f.force;
            }
        })?;

        if !force.is_finite() {
            return Err(EngineError::NonFiniteForce(ctx.agent.id(), ctx.agent.id()));
        }
        let dp = (force * (ctx.params.dt / ctx.params.mechanics.viscosity))
            .clamp_norm(ctx.params.mechanics.max_displacement);
        if dp != Vec3::ZERO {
            let (lp, ld) = endpoints_of(ctx.agent)?;
            ctx.agent.set_endpoints(lp, ld + dp);
        }
        Ok(())
    })
}

/// Standalone pass re-establishing proximal coincidence: every element's
/// proximal endpoint is snapped to its mother's distal point (soma surface
/// anchor for roots). Run after any op that moves distal masses or somata.
pub fn geometry_sync_op<P: NeuroView>() -> Operation<P> {
    Operation::standalone("neurite_geometry_sync", 1, |ctx: &mut crate::schedule::StandaloneCtx<'_, P>| {
        let mut updates: Vec<(usize, Vec3)> = Vec::new();
        for (slot, agent) in ctx.store.agents().iter().enumerate() {
            let Some(data) = agent.payload.as_neurite() else { continue };
            let target = match &data.mother {
                Attachment::Soma { soma, anchor } => {
                    let s = ctx
                        .store
                        .get(*soma)
                        .ok_or_else(|| EngineError::Model("dangling soma attachment".into()))?;
                    s.position + *anchor * s.radius()
                }
                Attachment::Element(m) => {
                    let mother = ctx
                        .store
                        .get(*m)
                        .ok_or_else(|| EngineError::Model("dangling neurite mother".into()))?;
                    endpoints_of(mother)?.1
                }
            };
            let (prox, _) = endpoints_of(agent)?;
            if (target - prox).norm_sq() > 0.0 {
                updates.push((slot, target));
            }
        }
        for (slot, target) in updates {
            let agent = &mut ctx.store.agents_mut()[slot];
            let (_, dist) = agent.endpoints().expect("checked in gather pass");
            agent.set_endpoints(target, dist);
        }
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// Tree inspection
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, Default)]
pub struct TreeStats {
    pub somata: usize,
    pub elements: usize,
    pub branch_points: usize,
    pub terminals: usize,
}

/// Verifies the full tree contract: proximal coincidence (to `tol`),
/// daughter/mother backlinks, reachability of every element from exactly one
/// soma, acyclicity, and the apical main-branch single-path property.
pub fn check_tree_invariants<P: NeuroView>(
    sim: &Simulation<P>,
    tol: f64,
) -> Result<TreeStats, String> {
    let mut stats = TreeStats::default();
    let mut visited: std::collections::HashMap<AgentId, AgentId> = std::collections::HashMap::new();

    for agent in sim.agents() {
        if let Some(soma) = agent.payload.as_soma() {
            stats.somata += 1;
            for &root in &soma.roots {
                let mut stack = vec![root];
                while let Some(id) = stack.pop() {
                    if visited.insert(id, agent.id()).is_some() {
                        return Err(format!(
                            "element {} reachable from more than one root (cycle or shared subtree)",
                            id.raw()
                        ));
                    }
                    let el = sim
                        .agent(id)
                        .ok_or_else(|| format!("dangling element id {}", id.raw()))?;
                    let data = el
                        .payload
                        .as_neurite()
                        .ok_or_else(|| format!("agent {} in tree is not a neurite", id.raw()))?;
                    let (prox, _) = el.endpoints().ok_or("element is not a cylinder")?;
                    let expected = match &data.mother {
                        Attachment::Soma { soma, anchor } => {
                            let s = sim.agent(*soma).ok_or("dangling soma")?;
                            s.position + *anchor * s.radius()
                        }
                        Attachment::Element(m) => {
                            let mother = sim.agent(*m).ok_or("dangling mother")?;
                            mother.endpoints().ok_or("mother is not a cylinder")?.1
                        }
                    };
                    if (expected - prox).norm() > tol {
                        return Err(format!(
                            "element {} proximal deviates {} µm from its mother's distal",
                            id.raw(),
                            (expected - prox).norm()
                        ));
                    }
                    for d in data.daughter_ids() {
                        let daughter = sim
                            .agent(d)
                            .ok_or_else(|| format!("dangling daughter {}", d.raw()))?;
                        let dd = daughter.payload.as_neurite().ok_or("daughter not a neurite")?;
                        if dd.mother.mother_id() != id {
                            return Err(format!(
                                "daughter {} does not point back at mother {}",
                                d.raw(),
                                id.raw()
                            ));
                        }
                        stack.push(d);
                    }
                    match data.daughter_count() {
                        0 => stats.terminals += 1,
                        2 => stats.branch_points += 1,
                        _ => {}
                    }
                }
            }
        }
    }

    for agent in sim.agents() {
        if agent.payload.as_neurite().is_some() {
            stats.elements += 1;
            if !visited.contains_key(&agent.id()) {
                return Err(format!("orphan element {} not reachable from any soma", agent.id().raw()));
            }
        }
    }

    // Apical main branch: a single unbranched path from the soma root to one
    // terminal, per arbor.
    for agent in sim.agents() {
        if let Some(soma) = agent.payload.as_soma() {
            for &root in &soma.roots {
                let root_agent = sim.agent(root).expect("checked above");
                let root_data = root_agent.payload.as_neurite().expect("checked above");
                if root_data.lineage != Lineage::Apical {
                    continue;
                }
                if !root_data.on_main_branch {
                    return Err(format!("apical root {} is not on the main branch", root.raw()));
                }
                // Walk the main chain.
                let mut chain = 0usize;
                let mut current = root;
                loop {
                    chain += 1;
                    let el = sim.agent(current).unwrap();
                    let data = el.payload.as_neurite().unwrap();
                    let main_daughters: Vec<AgentId> = data
                        .daughter_ids()
                        .filter(|d| {
                            sim.agent(*d)
                                .and_then(|a| a.payload.as_neurite().map(|n| n.on_main_branch))
                                .unwrap_or(false)
                        })
                        .collect();
                    match main_daughters.len() {
                        0 => {
                            if !data.is_terminal() && data.lineage == Lineage::Apical {
                                // A main-branch element whose daughters are all
                                // off-main would end the chain early.
                                return Err(format!(
                                    "apical main branch ends at non-terminal element {}",
                                    current.raw()
                                ));
                            }
                            break;
                        }
                        1 => current = main_daughters[0],
                        n => {
                            return Err(format!(
                                "element {} has {n} main-branch daughters",
                                current.raw()
                            ))
                        }
                    }
                }
                // Every main-branch element of this arbor must be on the chain.
                let mut main_count = 0usize;
                let mut stack = vec![root];
                while let Some(id) = stack.pop() {
                    let el = sim.agent(id).unwrap();
                    let data = el.payload.as_neurite().unwrap();
                    if data.on_main_branch {
                        main_count += 1;
                    }
                    stack.extend(data.daughter_ids());
                }
                if main_count != chain {
                    return Err(format!(
                        "apical arbor at root {} has {main_count} main-branch elements but a chain of {chain}",
                        root.raw()
                    ));
                }
            }
        }
    }

    Ok(stats)
}

// ---------------------------------------------------------------------------
// SWC morphology export
// ---------------------------------------------------------------------------

pub mod swc {
    use super::{Lineage, NeuroView};
    use crate::agent::AgentId;
    use crate::math::Vec3;
    use crate::sim::Simulation;
    use std::collections::HashMap;
    use std::io::{BufRead, Write};

    pub const TYPE_SOMA: i32 = 1;
    pub const TYPE_BASAL: i32 = 3;
    pub const TYPE_APICAL: i32 = 4;

    #[derive(Clone, Copy, Debug, PartialEq)]
    pub struct SwcNode {
        pub index: i64,
        pub node_type: i32,
        pub position: Vec3,
        pub radius: f64,
        pub parent: i64,
    }

    /// One sample per soma (its center) and per element (its distal point),
    /// in deterministic soma-id / depth-first order.
    pub fn export<P: NeuroView>(sim: &Simulation<P>) -> Vec<SwcNode> {
        let mut nodes = Vec::new();
        let mut file_index: HashMap<AgentId, i64> = HashMap::new();

        for agent in sim.agents() {
            let Some(soma) = agent.payload.as_soma() else { continue };
            let soma_index = nodes.len() as i64 + 1;
            file_index.insert(agent.id(), soma_index);
            nodes.push(SwcNode {
                index: soma_index,
                node_type: TYPE_SOMA,
                position: agent.position,
                radius: agent.radius(),
                parent: -1,
            });
            for &root in &soma.roots {
                let mut stack = vec![root];
                while let Some(id) = stack.pop() {
                    let el = sim.agent(id).expect("tree invariant");
                    let data = el.payload.as_neurite().expect("tree invariant");
                    let index = nodes.len() as i64 + 1;
                    file_index.insert(id, index);
                    let parent = file_index[&data.mother.mother_id()];
                    nodes.push(SwcNode {
                        index,
                        node_type: match data.lineage {
                            Lineage::Apical => TYPE_APICAL,
                            Lineage::Basal => TYPE_BASAL,
                        },
                        position: el.endpoints().expect("cylinder").1,
                        radius: el.radius(),
                        parent,
                    });
                    // Reverse order so daughter 0 is visited first.
                    let daughters: Vec<AgentId> = data.daughter_ids().collect();
                    for d in daughters.into_iter().rev() {
                        stack.push(d);
                    }
                }
            }
        }
        nodes
    }

    pub fn write<W: Write>(nodes: &[SwcNode], out: &mut W) -> std::io::Result<()> {
        writeln!(out, "# index type x y z radius parent")?;
        for n in nodes {
            writeln!(
                out,
                "{} {} {} {} {} {} {}",
                n.index, n.node_type, n.position.x, n.position.y, n.position.z, n.radius, n.parent
            )?;
        }
        Ok(())
    }

    pub fn parse<R: BufRead>(reader: R) -> Result<Vec<SwcNode>, String> {
        let mut nodes = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| format!("line {}: {e}", lineno + 1))?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split_whitespace().collect();
            if fields.len() != 7 {
                return Err(format!("line {}: expected 7 fields, got {}", lineno + 1, fields.len()));
            }
            let parse_f =
                |s: &str| s.parse::<f64>().map_err(|e| format!("line {}: {e}", lineno + 1));
            nodes.push(SwcNode {
                index: fields[0].parse().map_err(|e| format!("line {}: {e}", lineno + 1))?,
                node_type: fields[1].parse().map_err(|e| format!("line {}: {e}", lineno + 1))?,
                position: Vec3::new(parse_f(fields[2])?, parse_f(fields[3])?, parse_f(fields[4])?),
                radius: parse_f(fields[5])?,
                parent: fields[6].parse().map_err(|e| format!("line {}: {e}", lineno + 1))?,
            });
        }
        Ok(nodes)
    }
}

//! Dense agent storage. Live agents occupy a contiguous vector (slot order is
//! id order); an id-indexed table maps stable ids to slots and is rebuilt at
//! barrier compaction. Ids are never reused.

use crate::agent::{Agent, AgentId, Payload};
use crate::error::EngineError;

const DEAD: u32 = u32::MAX;

pub struct AgentStore<P> {
    agents: Vec<Agent<P>>,
    id_to_slot: Vec<u32>,
    next_id: u64,
    births: u64,
    deaths: u64,
}

impl<P: Payload> AgentStore<P> {
    pub fn new() -> Self {
        AgentStore { agents: Vec::new(), id_to_slot: Vec::new(), next_id: 0, births: 0, deaths: 0 }
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn births(&self) -> u64 {
        self.births
    }

    pub fn deaths(&self) -> u64 {
        self.deaths
    }

    pub(crate) fn next_id_mut(&mut self) -> &mut u64 {
        &mut self.next_id
    }

    /// Inserts a validated agent. Agents with an unassigned id get the next
    /// fresh id; agents built through an event's `IdAlloc` must arrive in
    /// allocation order.
    pub fn insert(&mut self, mut agent: Agent<P>) -> Result<AgentId, EngineError> {
        agent.validate()?;
        if !agent.id().is_assigned() {
            agent.set_id(AgentId::from_raw(self.next_id));
            self.next_id += 1;
        }
        let id = agent.id();
        debug_assert_eq!(
            id.raw() as usize,
            self.id_to_slot.len(),
            "agent ids must be inserted in allocation order"
        );
        self.id_to_slot.push(self.agents.len() as u32);
        self.agents.push(agent);
        self.births += 1;
        Ok(id)
    }

    pub fn slot_of(&self, id: AgentId) -> Option<usize> {
        let raw = id.raw() as usize;
        match self.id_to_slot.get(raw) {
            Some(&slot) if slot != DEAD => Some(slot as usize),
            _ => None,
        }
    }

    pub fn is_live(&self, id: AgentId) -> bool {
        self.slot_of(id).is_some()
    }

    pub fn get(&self, id: AgentId) -> Option<&Agent<P>> {
        self.slot_of(id).map(|s| &self.agents[s])
    }

    pub fn get_mut(&mut self, id: AgentId) -> Option<&mut Agent<P>> {
        let slot = self.slot_of(id)?;
        Some(&mut self.agents[slot])
    }

    pub fn agents(&self) -> &[Agent<P>] {
        &self.agents
    }

    pub fn agents_mut(&mut self) -> &mut [Agent<P>] {
        &mut self.agents
    }

    pub fn iter(&self) -> impl Iterator<Item = &Agent<P>> {
        self.agents.iter()
    }

    /// Marks an agent dead and compacts immediately. Returns false (and
    /// changes nothing) if the id is not live.
    pub fn remove_now(&mut self, id: AgentId) -> bool {
        match self.slot_of(id) {
            Some(slot) => {
                self.agents.remove(slot);
                self.id_to_slot[id.raw() as usize] = DEAD;
                for s in self.id_to_slot.iter_mut() {
                    if *s != DEAD && *s as usize > slot {
                        *s -= 1;
                    }
                }
                self.deaths += 1;
                true
            }
            None => false,
        }
    }

    /// Barrier removal: marks ids dead, then compacts once. `ids` must be
    /// sorted and deduplicated. Returns how many were actually live.
    pub(crate) fn remove_batch(&mut self, ids: &[AgentId]) -> usize {
        let mut removed = 0;
        for &id in ids {
            let raw = id.raw() as usize;
            if let Some(&slot) = self.id_to_slot.get(raw) {
                if slot != DEAD {
                    self.id_to_slot[raw] = DEAD;
                    removed += 1;
                }
            }
        }
        if removed > 0 {
            let id_to_slot = &self.id_to_slot;
            self.agents.retain(|a| id_to_slot[a.id().raw() as usize] != DEAD);
            for (slot, agent) in self.agents.iter().enumerate() {
                self.id_to_slot[agent.id().raw() as usize] = slot as u32;
            }
            self.deaths += removed as u64;
        }
        removed as usize
    }
}

impl<P: Payload> Default for AgentStore<P> {
    fn default() -> Self {
        Self::new()
    }
}

//! Per-agent rules and their propagation flags.

use crate::error::EngineError;
use crate::schedule::AgentCtx;

/// Kinds of agent-creation events. The first four are the built-in taxonomy;
/// `NeuriteSplit` is fired when an element exceeds its maximum length, and
/// `Spawn` covers scenario-defined creation of unrelated agents.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum EventKind {
    CellDivision,
    NeuriteExtension,
    NeuriteBifurcation,
    NeuriteSideBranch,
    NeuriteSplit,
    Spawn,
}

pub const EVENT_KINDS: [EventKind; 6] = [
    EventKind::CellDivision,
    EventKind::NeuriteExtension,
    EventKind::NeuriteBifurcation,
    EventKind::NeuriteSideBranch,
    EventKind::NeuriteSplit,
    EventKind::Spawn,
];

impl EventKind {
    #[inline]
    fn bit(self) -> u8 {
        match self {
            EventKind::CellDivision => 1 << 0,
            EventKind::NeuriteExtension => 1 << 1,
            EventKind::NeuriteBifurcation => 1 << 2,
            EventKind::NeuriteSideBranch => 1 << 3,
            EventKind::NeuriteSplit => 1 << 4,
            EventKind::Spawn => 1 << 5,
        }
    }
}

/// Per-event-kind copy/remove flags. On a creation event of kind `k`, a
/// behavior appears on the new agent iff `copies(k)` and disappears from the
/// existing agent iff `removes(k)`.
#[derive(Clone, Copy, Default, PartialEq, Eq, Debug)]
pub struct EventFlags {
    copy: u8,
    remove: u8,
}

impl EventFlags {
    pub fn new() -> Self {
        EventFlags::default()
    }

    pub fn copy_on(mut self, kind: EventKind) -> Self {
        self.copy |= kind.bit();
        self
    }

    pub fn remove_on(mut self, kind: EventKind) -> Self {
        self.remove |= kind.bit();
        self
    }

    #[inline]
    pub fn copies(&self, kind: EventKind) -> bool {
        self.copy & kind.bit() != 0
    }

    #[inline]
    pub fn removes(&self, kind: EventKind) -> bool {
        self.remove & kind.bit() != 0
    }
}

/// A rule executed for its agent once per scheduled step.
///
/// Contract: the body may mutate only its own agent (through the context),
/// read neighbor state from the step-start snapshot, read diffusion fields,
/// and enqueue events; structural changes become visible at the step barrier.
pub trait Behavior<P>: Send + Sync {
    fn run(&self, ctx: &mut AgentCtx<'_, P>) -> Result<(), EngineError>;

    fn flags(&self) -> EventFlags {
        EventFlags::default()
    }

    fn name(&self) -> &str {
        "behavior"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_truth_table() {
        for copy in [false, true] {
            for remove in [false, true] {
                let mut f = EventFlags::new();
                if copy {
                    f = f.copy_on(EventKind::CellDivision);
                }
                if remove {
                    f = f.remove_on(EventKind::CellDivision);
                }
                assert_eq!(f.copies(EventKind::CellDivision), copy);
                assert_eq!(f.removes(EventKind::CellDivision), remove);
                // Other kinds unaffected.
                assert!(!f.copies(EventKind::Spawn));
                assert!(!f.removes(EventKind::NeuriteSplit));
            }
        }
    }
}

use std::sync::{Condvar, Mutex};

/// Raised by [`Rendezvous::wait`] once any participant has aborted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Aborted;

struct State {
    arrived: usize,
    generation: u64,
    aborted: bool,
}

/// Reusable barrier that can be torn down, so a panicking worker releases
/// everyone blocked on it instead of deadlocking the run.
pub(crate) struct Rendezvous {
    parties: usize,
    state: Mutex<State>,
    cv: Condvar,
}

impl Rendezvous {
    pub(crate) fn new(parties: usize) -> Self {
        Rendezvous { parties, state: Mutex::new(State { arrived: 0, generation: 0, aborted: false }), cv: Condvar::new() }
    }

    /// Blocks until all parties arrive. Returns `true` for exactly one
    /// participant per round.
    pub(crate) fn wait(&self) -> Result<bool, Aborted> {
        let mut st = self.state.lock().unwrap_or_else(|e| e.into_inner());
        if st.aborted {
            return Err(Aborted);
        }
        st.arrived += 1;
        if st.arrived == self.parties {
            st.arrived = 0;
            st.generation += 1;
            self.cv.notify_all();
            return Ok(true);
        }
        let generation = st.generation;
        while st.generation == generation && !st.aborted {
            st = self.cv.wait(st).unwrap_or_else(|e| e.into_inner());
        }
        if st.generation == generation {
            Err(Aborted)
        } else {
            Ok(false)
        }
    }

    pub(crate) fn abort(&self) {
        let mut st = self.state.lock().unwrap_or_else(|e| e.into_inner());
        st.aborted = true;
        self.cv.notify_all();
    }
}

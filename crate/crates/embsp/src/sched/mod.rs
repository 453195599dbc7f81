//! Thread scheduling on one real processor.
//!
//! Local thread `t` runs in memory partition `t mod k`. A partition is handed
//! to the lowest-id thread requesting it, and a thread entering a new phase is
//! admitted only once no thread of an earlier round (`t / k`) can still run.
//! Phases end at a barrier whose last arrival runs a leader action; threads of
//! one round can also meet at a round sync.

pub(crate) mod signal;

use std::sync::atomic::{AtomicBool, Ordering};

use parking_lot::{Condvar, Mutex};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum St {
    /// Wants its partition; `first` marks the first admission of a phase.
    Requesting { first: bool },
    Running,
    /// Waiting for the rest of its round.
    RoundWait,
    /// Blocked on a signal, with or without its partition.
    Waiting { holds: bool },
    /// Signalled while waiting without its partition; about to request it.
    Woken,
    /// At the phase barrier.
    Arrived,
    Exited,
}

/// One first admission of a phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Admission {
    pub phase: u64,
    pub thread: usize,
}

struct Inner {
    st: Vec<St>,
    owner: Vec<Option<usize>>,
    phase: u64,
    arrived: usize,
    exited: usize,
    tag: Option<(&'static str, usize)>,
    leader_busy: bool,
    retained: Vec<bool>,
    exempt: Vec<bool>,
    round_count: Vec<usize>,
    round_gen: Vec<u64>,
    round_busy: usize,
    admissions: Vec<Admission>,
}

pub(crate) struct Scheduler {
    n: usize,
    k: usize,
    inner: Mutex<Inner>,
    cv: Condvar,
    aborted: AtomicBool,
}

impl Scheduler {
    pub fn new(n: usize, k: usize) -> Self {
        let rounds = n.div_ceil(k);
        Scheduler {
            n,
            k,
            inner: Mutex::new(Inner {
                st: vec![St::Requesting { first: true }; n],
                owner: vec![None; k],
                phase: 0,
                arrived: 0,
                exited: 0,
                tag: None,
                leader_busy: false,
                retained: vec![false; n],
                exempt: vec![false; n],
                round_count: vec![0; rounds],
                round_gen: vec![0; rounds],
                round_busy: 0,
                admissions: Vec::new(),
            }),
            cv: Condvar::new(),
            aborted: AtomicBool::new(false),
        }
    }

    /// Restores the initial state for a new run.
    pub fn reset(&self) {
        let mut g = self.inner.lock();
        let rounds = g.round_count.len();
        *g = Inner {
            st: vec![St::Requesting { first: true }; self.n],
            owner: vec![None; self.k],
            phase: 0,
            arrived: 0,
            exited: 0,
            tag: None,
            leader_busy: false,
            retained: vec![false; self.n],
            exempt: vec![false; self.n],
            round_count: vec![0; rounds],
            round_gen: vec![0; rounds],
            round_busy: 0,
            admissions: Vec::new(),
        };
        self.aborted.store(false, Ordering::SeqCst);
    }

    pub fn abort(&self) {
        self.aborted.store(true, Ordering::SeqCst);
        let _g = self.inner.lock();
        self.cv.notify_all();
    }

    pub fn is_aborted(&self) -> bool {
        self.aborted.load(Ordering::SeqCst)
    }

    fn check_abort(&self) -> Result<()> {
        if self.is_aborted() {
            Err(Error::Aborted)
        } else {
            Ok(())
        }
    }

    pub fn admissions(&self) -> Vec<Admission> {
        self.inner.lock().admissions.clone()
    }

    pub fn phase(&self) -> u64 {
        self.inner.lock().phase
    }

    fn members(&self, round: usize) -> usize {
        self.k.min(self.n - round * self.k)
    }

    fn blocking(&self, g: &Inner, u: usize) -> bool {
        let live = |s: St| matches!(s, St::Running | St::RoundWait | St::Woken);
        match g.st[u] {
            St::Running | St::RoundWait | St::Woken => true,
            St::Requesting { .. } => g.owner[u % self.k].is_none_or(|o| live(g.st[o])),
            _ => false,
        }
    }

    fn admissible(&self, g: &Inner, t: usize) -> bool {
        let St::Requesting { first } = g.st[t] else { return false };
        let p = t % self.k;
        if g.owner[p].is_some() {
            return false;
        }
        let mut u = p;
        while u < t {
            if matches!(g.st[u], St::Requesting { .. }) {
                return false;
            }
            u += self.k;
        }
        if !first || g.exempt[t] {
            return true;
        }
        let round = t / self.k;
        (0..round * self.k).all(|u| g.exempt[u] || !self.blocking(g, u))
    }

    /// Nothing can change any more: no thread can run and the barrier is incomplete.
    fn stalled(&self, g: &Inner) -> bool {
        if g.leader_busy || g.round_busy > 0 {
            return false;
        }
        for u in 0..self.n {
            match g.st[u] {
                St::Running | St::Woken => return false,
                St::Requesting { .. } if self.admissible(g, u) => return false,
                _ => {}
            }
        }
        !g.st.iter().all(|s| matches!(s, St::Arrived | St::Exited))
    }

    fn stall_error(&self, g: &Inner) -> Error {
        Error::Protocol(format!(
            "deadlock: the virtual processors did not make matching collective calls (thread states {:?})",
            g.st
        ))
    }

    fn acquire_locked(&self, g: &mut parking_lot::MutexGuard<'_, Inner>, t: usize) -> Result<()> {
        loop {
            self.check_abort()?;
            if self.admissible(g, t) {
                let first = matches!(g.st[t], St::Requesting { first: true });
                g.owner[t % self.k] = Some(t);
                g.st[t] = St::Running;
                if first {
                    let phase = g.phase;
                    g.admissions.push(Admission { phase, thread: t });
                }
                return Ok(());
            }
            if self.stalled(g) {
                return Err(self.stall_error(g));
            }
            self.cv.wait(g);
        }
    }

    /// Blocks until `t` owns its partition. `t` must already be requesting.
    pub fn acquire(&self, t: usize) -> Result<()> {
        let mut g = self.inner.lock();
        self.acquire_locked(&mut g, t)
    }

    /// Requests the partition again after waiting without it.
    pub fn relock(&self, t: usize) -> Result<()> {
        let mut g = self.inner.lock();
        g.st[t] = St::Requesting { first: false };
        self.acquire_locked(&mut g, t)
    }

    /// Gives up the partition to wait on a signal.
    pub fn release_to_wait(&self, t: usize) -> Result<()> {
        let mut g = self.inner.lock();
        let p = t % self.k;
        debug_assert_eq!(g.owner[p], Some(t));
        g.owner[p] = None;
        g.st[t] = St::Waiting { holds: false };
        self.cv.notify_all();
        if self.stalled(&g) {
            return Err(self.stall_error(&g));
        }
        Ok(())
    }

    /// Waits on a signal while keeping the partition.
    pub fn suspend(&self, t: usize) -> Result<()> {
        let mut g = self.inner.lock();
        g.st[t] = St::Waiting { holds: true };
        self.cv.notify_all();
        if self.stalled(&g) {
            return Err(self.stall_error(&g));
        }
        Ok(())
    }

    /// Every other thread sharing `t`'s partition has finished the current phase.
    pub fn last_in_partition(&self, t: usize) -> bool {
        let g = self.inner.lock();
        (t % self.k..self.n)
            .step_by(self.k)
            .filter(|&u| u != t)
            .all(|u| matches!(g.st[u], St::Arrived | St::Exited))
    }

    /// Marks a signalled waiter runnable.
    pub fn wake(&self, t: usize) {
        let mut g = self.inner.lock();
        g.st[t] = match g.st[t] {
            St::Waiting { holds: true } => St::Running,
            St::Waiting { holds: false } => St::Woken,
            s => s,
        };
    }

    /// Meets the other threads of `t`'s round; the last to arrive runs `leader` first.
    pub fn round_sync(&self, t: usize, leader: &mut dyn FnMut() -> Result<()>) -> Result<()> {
        let r = t / self.k;
        let members = self.members(r);
        let mut g = self.inner.lock();
        self.check_abort()?;
        g.st[t] = St::RoundWait;
        g.round_count[r] += 1;
        let gen = g.round_gen[r];
        if g.round_count[r] == members {
            g.round_count[r] = 0;
            g.round_busy += 1;
            drop(g);
            let res = leader();
            let mut g = self.inner.lock();
            g.round_busy -= 1;
            g.round_gen[r] += 1;
            for u in r * self.k..r * self.k + members {
                if g.st[u] == St::RoundWait {
                    g.st[u] = St::Running;
                }
            }
            self.cv.notify_all();
            return res;
        }
        self.cv.notify_all();
        loop {
            self.check_abort()?;
            if g.round_gen[r] != gen {
                return Ok(());
            }
            if let Some(u) = (r * self.k..r * self.k + members).find(|&u| matches!(g.st[u], St::Arrived | St::Exited)) {
                return Err(Error::Protocol(format!(
                    "collective mismatch: local thread {u} finished its phase while thread {t} waits inside a collective"
                )));
            }
            if self.stalled(&g) {
                return Err(self.stall_error(&g));
            }
            self.cv.wait(&mut g);
        }
    }

    /// Phase barrier. `t` arrives from call site `tag`; the last arrival runs `leader`.
    ///
    /// Unless `retain` is set the partition is released on arrival and requested
    /// again afterwards. With `exit` the thread leaves for good.
    pub fn end_phase(
        &self,
        t: usize,
        rho: usize,
        tag: &'static str,
        retain: bool,
        exit: bool,
        leader: &mut dyn FnMut() -> Result<()>,
    ) -> Result<()> {
        let mut g = self.inner.lock();
        self.check_abort()?;
        match g.tag {
            None => g.tag = Some((tag, rho)),
            Some((other, who)) if other != tag => {
                return Err(Error::Protocol(format!(
                    "collective mismatch: VP {rho} reached `{tag}` while VP {who} reached `{other}`"
                )));
            }
            _ => {}
        }
        let p = t % self.k;
        if !retain && g.owner[p] == Some(t) {
            g.owner[p] = None;
        }
        g.retained[t] = retain && !exit;
        g.st[t] = if exit { St::Exited } else { St::Arrived };
        g.arrived += 1;
        let phase = g.phase;
        if g.arrived + g.exited == self.n {
            g.leader_busy = true;
            drop(g);
            let res = leader();
            g = self.inner.lock();
            g.leader_busy = false;
            let newly_exited = g.st.iter().filter(|s| **s == St::Exited).count();
            g.exited = newly_exited;
            g.arrived = 0;
            g.tag = None;
            g.phase += 1;
            for u in 0..self.n {
                if g.st[u] == St::Arrived {
                    let keep = g.retained[u];
                    g.st[u] = if keep { St::Running } else { St::Requesting { first: true } };
                    g.exempt[u] = keep;
                } else {
                    g.exempt[u] = false;
                }
            }
            self.cv.notify_all();
            res?;
        } else {
            self.cv.notify_all();
            loop {
                self.check_abort()?;
                if g.phase != phase {
                    break;
                }
                if self.stalled(&g) {
                    return Err(self.stall_error(&g));
                }
                self.cv.wait(&mut g);
            }
        }
        if exit || retain {
            return Ok(());
        }
        self.acquire_locked(&mut g, t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn run_phases(n: usize, k: usize, phases: usize) -> Vec<Admission> {
        let s = Arc::new(Scheduler::new(n, k));
        std::thread::scope(|scope| {
            for t in 0..n {
                let s = Arc::clone(&s);
                scope.spawn(move || {
                    s.acquire(t).unwrap();
                    for _ in 0..phases {
                        std::thread::yield_now();
                        s.end_phase(t, t, "step", false, false, &mut || Ok(())).unwrap();
                    }
                    s.end_phase(t, t, "exit", false, true, &mut || Ok(())).unwrap();
                });
            }
        });
        s.admissions()
    }

    #[test]
    fn rounds_are_admitted_in_order() {
        let (n, k) = (7, 3);
        let adm = run_phases(n, k, 4);
        assert_eq!(adm.len(), n * 5);
        for phase in 0..5u64 {
            let order: Vec<usize> = adm.iter().filter(|a| a.phase == phase).map(|a| a.thread / k).collect();
            assert!(order.windows(2).all(|w| w[0] <= w[1]), "phase {phase}: {order:?}");
        }
    }

    #[test]
    fn tag_mismatch_is_reported() {
        let s = Arc::new(Scheduler::new(2, 2));
        let errs: Vec<Result<()>> = std::thread::scope(|scope| {
            let hs: Vec<_> = (0..2)
                .map(|t| {
                    let s = Arc::clone(&s);
                    scope.spawn(move || {
                        s.acquire(t)?;
                        let tag = if t == 0 { "barrier" } else { "bcast" };
                        let r = s.end_phase(t, t, tag, false, false, &mut || Ok(()));
                        if r.is_err() {
                            s.abort();
                        }
                        r
                    })
                })
                .collect();
            hs.into_iter().map(|h| h.join().unwrap()).collect()
        });
        let msg = errs.iter().find_map(|r| r.as_ref().err().filter(|e| !e.is_secondary())).unwrap().to_string();
        assert!(msg.contains("barrier") && msg.contains("bcast"), "{msg}");
    }

    #[test]
    fn round_sync_runs_leader_once() {
        let n = 4;
        let s = Arc::new(Scheduler::new(n, 2));
        let hits = Arc::new(std::sync::atomic::AtomicUsize::new(0));
        std::thread::scope(|scope| {
            for t in 0..n {
                let s = Arc::clone(&s);
                let hits = Arc::clone(&hits);
                scope.spawn(move || {
                    s.acquire(t).unwrap();
                    s.round_sync(t, &mut || {
                        hits.fetch_add(1, Ordering::SeqCst);
                        Ok(())
                    })
                    .unwrap();
                    s.end_phase(t, t, "exit", false, true, &mut || Ok(())).unwrap();
                });
            }
        });
        assert_eq!(hits.load(Ordering::SeqCst), 2);
    }
}

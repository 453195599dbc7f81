//! Composite signals: a counter, a flag and a condition variable.
//!
//! The rooted collectives use them to let one local thread publish data and
//! the others wait for it, yielding their partition when the publisher needs it.

use parking_lot::{Condvar, Mutex, MutexGuard};

use crate::error::{Error, Result};
use crate::runtime::{SwapCause, Vp};

pub(crate) struct SigState {
    count: usize,
    flag: bool,
    epoch: u64,
    arrived: Vec<bool>,
    waiters: Vec<usize>,
    aborted: bool,
}

pub(crate) struct CompositeSignal {
    n: usize,
    inner: Mutex<SigState>,
    cv: Condvar,
}

/// Held by the thread that won [`Vp::em_first_thread`] until it signals.
pub(crate) struct SignalGuard<'s>(MutexGuard<'s, SigState>);

pub(crate) enum FirstOutcome<'s> {
    First(SignalGuard<'s>),
    NotFirst,
}

pub(crate) enum FinishOutcome<'s> {
    /// Every other thread had already finished.
    Last,
    /// Others are still running; wait with [`Vp::em_wait_threads`].
    Blocking(SignalGuard<'s>),
}

impl CompositeSignal {
    pub fn new(n: usize) -> Self {
        CompositeSignal {
            n,
            inner: Mutex::new(SigState {
                count: 0,
                flag: false,
                epoch: 0,
                arrived: vec![false; n],
                waiters: Vec::new(),
                aborted: false,
            }),
            cv: Condvar::new(),
        }
    }

    pub fn reset(&self, n: usize) {
        let mut g = self.inner.lock();
        *g = SigState { count: 0, flag: false, epoch: 0, arrived: vec![false; n], waiters: Vec::new(), aborted: false };
    }

    pub fn abort(&self) {
        let mut g = self.inner.lock();
        g.aborted = true;
        self.cv.notify_all();
    }

    fn count_in(&self, g: &mut SigState) {
        g.count += 1;
        if g.count == self.n {
            g.count = 0;
            g.flag = false;
        }
    }
}

impl<'a> Vp<'a> {
    fn sig_wake_all(&self, s: &CompositeSignal, g: &mut SigState) {
        for w in g.waiters.drain(..) {
            self.sh.sched.wake(w);
        }
        s.cv.notify_all();
    }

    /// Blocks on `s` until its epoch moves past `epoch`.
    fn sig_wait(&self, s: &CompositeSignal, g: &mut MutexGuard<'_, SigState>, epoch: u64) -> Result<()> {
        while g.epoch == epoch {
            if g.aborted || self.sh.aborted() {
                return Err(Error::Aborted);
            }
            s.cv.wait(g);
        }
        Ok(())
    }

    /// Leaves the partition (swapping out first) or keeps it while waiting.
    fn sig_park(&mut self, yield_partition: bool, cause: SwapCause) -> Result<()> {
        if yield_partition {
            self.swap_out(&[], cause)?;
            self.sh.driver.wait(self.q)?;
            self.sh.sched.release_to_wait(self.t)
        } else {
            self.sh.sched.suspend(self.t)
        }
    }

    /// Returns [`FirstOutcome::First`] with the lock held to exactly one caller per
    /// round of `n` calls; the others block until it has signalled.
    pub(crate) fn em_first_thread<'s>(&mut self, s: &'s CompositeSignal) -> Result<FirstOutcome<'s>> {
        self.jitter();
        let mut g = s.inner.lock();
        if g.aborted {
            return Err(Error::Aborted);
        }
        if g.count == 0 && !g.flag {
            return Ok(FirstOutcome::First(SignalGuard(g)));
        }
        debug_assert!(g.flag);
        s.count_in(&mut g);
        Ok(FirstOutcome::NotFirst)
    }

    /// Sets the flag and wakes every waiter; releases the guard if one is given.
    pub(crate) fn em_signal_threads(&mut self, s: &CompositeSignal, guard: Option<SignalGuard<'_>>) -> Result<()> {
        let mut g = match guard {
            Some(SignalGuard(g)) => g,
            None => s.inner.lock(),
        };
        g.flag = true;
        g.epoch += 1;
        s.count_in(&mut g);
        self.sig_wake_all(s, &mut g);
        Ok(())
    }

    /// Waits for the root (local thread `root_t`) to signal. Returns whether this
    /// VP gave up its partition, which happens when it shares one with the root.
    pub(crate) fn em_wait_for_root(&mut self, s: &CompositeSignal, root_t: usize) -> Result<bool> {
        self.jitter();
        let mut g = s.inner.lock();
        if g.flag {
            s.count_in(&mut g);
            return Ok(false);
        }
        let epoch = g.epoch;
        let yield_partition = self.t % self.sh.cfg.k == root_t % self.sh.cfg.k;
        g.waiters.push(self.t);
        self.sig_park(yield_partition, SwapCause::BcastWait)?;
        self.sig_wait(s, &mut g, epoch)?;
        s.count_in(&mut g);
        drop(g);
        if yield_partition {
            self.sh.sched.relock(self.t)?;
        }
        Ok(yield_partition)
    }

    /// A non-root thread reports completion without waiting.
    pub(crate) fn em_thread_finished(&mut self, s: &CompositeSignal) -> Result<()> {
        self.jitter();
        let mut g = s.inner.lock();
        if g.aborted {
            return Err(Error::Aborted);
        }
        g.count += 1;
        g.arrived[self.t] = true;
        if g.count == self.sh.n - 1 && !g.waiters.is_empty() {
            g.epoch += 1;
            self.sig_wake_all(s, &mut g);
        }
        Ok(())
    }

    /// The root checks whether every other local thread has finished.
    pub(crate) fn em_all_threads_finished<'s>(&mut self, s: &'s CompositeSignal) -> Result<FinishOutcome<'s>> {
        self.jitter();
        let mut g = s.inner.lock();
        if g.aborted {
            return Err(Error::Aborted);
        }
        if g.count == self.sh.n - 1 {
            g.count = 0;
            g.arrived.iter_mut().for_each(|a| *a = false);
            return Ok(FinishOutcome::Last);
        }
        Ok(FinishOutcome::Blocking(SignalGuard(g)))
    }

    /// The root waits for the stragglers. Returns whether it gave up its partition,
    /// which it does when an unfinished thread needs that partition.
    pub(crate) fn em_wait_threads(&mut self, s: &CompositeSignal, guard: SignalGuard<'_>) -> Result<bool> {
        let mut g = guard.0;
        let k = self.sh.cfg.k;
        let yield_partition =
            (0..self.sh.n).any(|u| u != self.t && u % k == self.t % k && !g.arrived[u]);
        let epoch = g.epoch;
        g.waiters.push(self.t);
        self.sig_park(yield_partition, SwapCause::GatherWait)?;
        self.sig_wait(s, &mut g, epoch)?;
        g.count = 0;
        g.arrived.iter_mut().for_each(|a| *a = false);
        drop(g);
        if yield_partition {
            self.sh.sched.relock(self.t)?;
        }
        Ok(yield_partition)
    }
}

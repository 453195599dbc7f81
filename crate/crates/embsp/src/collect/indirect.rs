//! The staged all-to-all used as a baseline: messages pass through a reserved
//! disk area instead of going straight into the receiving contexts.

use embsp_core::block::align_up;
use embsp_core::{Category, DiskRegion, MsgSpec};

use crate::error::{Error, Result};
use crate::runtime::{SwapCause, Vp};

impl Vp<'_> {
    pub fn alltoallv_indirect(&mut self, spec: &MsgSpec) -> Result<()> {
        let sh = self.sh;
        let disk = sh.indirect_disk.ok_or(Error::IndirectAreaMissing)?;
        let (v, b) = (sh.cfg.v, sh.cfg.block_size);
        spec.validate(v, sh.cfg.mu)?;
        let bound = sh.cfg.indirect_omega.unwrap_or(0);
        if spec.omega() > bound {
            return Err(Error::Usage(format!(
                "message of {} bytes exceeds the reserved indirect bound of {bound}",
                spec.omega()
            )));
        }
        assert!(self.resident, "collective entered while swapped out");
        let slot = align_up(bound, b);
        let at = |dst: usize, src: usize| ((dst * v + src) * slot) as u64;

        for (j, &msg) in spec.send.iter().enumerate() {
            sh.indirect_lens.lock()[j * v + self.rho] = msg.len;
            if msg.is_empty() {
                continue;
            }
            let mut buf = vec![0u8; align_up(msg.len, b)];
            buf[..msg.len].copy_from_slice(self.bytes(msg));
            let r = DiskRegion { disk, offset: at(j, self.rho), len: buf.len() as u64 };
            sh.driver.write(self.q, r, &buf, Category::DeliveryWrite)?;
            sh.counters.add_logical(Category::DeliveryWrite, msg.len as u64);
            sh.counters.add_indirect(1);
        }
        self.swap_out(&[], SwapCause::Indirect)?;
        self.step_end("indirect/stage", &mut || Ok(()))?;

        self.swap_in(SwapCause::Indirect)?;
        for (i, &r) in spec.recv.iter().enumerate() {
            let len = sh.indirect_lens.lock()[self.rho * v + i];
            if len != r.len {
                return Err(Error::SpecMismatch { src: i, dst: self.rho, sent: len, expected: r.len });
            }
            if len == 0 {
                continue;
            }
            let dr = DiskRegion { disk, offset: at(self.rho, i), len: align_up(len, b) as u64 };
            let buf = sh.driver.read_vec(self.q, dr, Category::DeliveryRead)?;
            sh.counters.add_logical(Category::DeliveryRead, len as u64);
            self.bytes_mut(r).copy_from_slice(&buf[..len]);
        }
        self.superstep_end("indirect")
    }
}

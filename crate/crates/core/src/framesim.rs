//! Frame-by-frame TDD simulator measuring the exact per-batch upload delay.
//!
//! Every frame of length `T` carries a DL/ISAC sub-frame and a UL sub-frame
//! of length `rho_ul T`. A batch of `n_b` bits is queued at the start of a
//! frame and drained at the per-frame UL capacity; its input ends at the end
//! of the frame in which the backlog empties. The next batch is generated in
//! the following frame. Channels are constant across frames.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::ei::{ul_rate, Representation, FRAME_FIT_REL_TOL};
use crate::error::{Error, Result};
use crate::profile::InferenceModelProfile;
use crate::scenario::Scenario;

/// Where the UL sub-frame sits inside each frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UlPlacement {
    /// DL first, UL in the tail of the frame.
    #[default]
    Tail,
    Head,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame: u64,
    pub rho_ul: f64,
    pub batch: u64,
    pub bits_uploaded: f64,
    /// Backlog left at the end of the frame.
    pub backlog_bits: f64,
    pub ul_start_s: f64,
    pub ul_end_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchRecord {
    pub batch: u64,
    pub generation_frame: u64,
    pub upload_complete_frame: u64,
    pub compute_done_s: f64,
    pub l_comm_s: f64,
    pub l_comp_s: f64,
    pub l_tot_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameTrace {
    pub frame_duration_s: f64,
    pub bits_per_batch: f64,
    /// UL capacity of one frame, `rho_ul T R_ul`.
    pub bits_per_frame: f64,
    pub frames: Vec<FrameRecord>,
    pub batches: Vec<BatchRecord>,
}

impl FrameTrace {
    pub fn total_bits_uploaded(&self) -> f64 {
        self.frames.iter().map(|f| f.bits_uploaded).sum()
    }

    pub fn write_frames_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "frame,batch,rho_ul,bits_uploaded,backlog_bits,ul_start_s,ul_end_s")?;
        for f in &self.frames {
            writeln!(
                out,
                "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                f.frame, f.batch, f.rho_ul, f.bits_uploaded, f.backlog_bits, f.ul_start_s, f.ul_end_s
            )?;
        }
        Ok(())
    }

    pub fn write_batches_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "batch,generation_frame,upload_complete_frame,compute_done_s,l_comm_s,l_comp_s,l_tot_s"
        )?;
        for b in &self.batches {
            writeln!(
                out,
                "{},{},{},{:.16e},{:.16e},{:.16e},{:.16e}",
                b.batch, b.generation_frame, b.upload_complete_frame, b.compute_done_s, b.l_comm_s, b.l_comp_s, b.l_tot_s
            )?;
        }
        Ok(())
    }
}

/// Simulates `n_batches` back-to-back uploads with the UL in the frame tail.
pub fn simulate(
    s: &Scenario,
    cs: &ChannelSet,
    rep: Representation,
    model: &InferenceModelProfile,
    rho_ul: f64,
    n_batches: u64,
    seed: u64,
) -> Result<FrameTrace> {
    simulate_with_placement(s, cs, rep, model, rho_ul, n_batches, seed, UlPlacement::Tail)
}

#[allow(clippy::too_many_arguments)]
pub fn simulate_with_placement(
    s: &Scenario,
    cs: &ChannelSet,
    rep: Representation,
    model: &InferenceModelProfile,
    rho_ul: f64,
    n_batches: u64,
    seed: u64,
    placement: UlPlacement,
) -> Result<FrameTrace> {
    if !(rho_ul > 0.0 && rho_ul <= 1.0) {
        return Err(Error::invalid("rho_ul", format!("must lie in (0, 1], got {rho_ul}")));
    }
    let t = s.frame_duration_s;
    let capacity = ul_rate(s, cs, rho_ul) * t;
    if !(capacity > 0.0 && capacity.is_finite()) {
        return Err(Error::Degenerate(format!(
            "UL capacity per frame is {capacity} bits at rho_ul={rho_ul}"
        )));
    }
    let n_b = rep.n_b as f64;
    let drained_below = FRAME_FIT_REL_TOL * n_b;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frames = Vec::new();
    let mut batches = Vec::with_capacity(n_batches as usize);
    let mut frame = 0u64;

    for batch in 0..n_batches {
        let generation_frame = frame;
        let mut backlog = n_b;
        loop {
            let (ul_start_s, ul_end_s) = match placement {
                UlPlacement::Tail => (frame as f64 * t + (1.0 - rho_ul) * t, (frame + 1) as f64 * t),
                UlPlacement::Head => (frame as f64 * t, frame as f64 * t + rho_ul * t),
            };
            let rest = backlog - capacity;
            let uploaded = if rest <= drained_below { backlog } else { capacity };
            backlog = if rest <= drained_below { 0.0 } else { rest };
            frames.push(FrameRecord {
                frame,
                rho_ul,
                batch,
                bits_uploaded: uploaded,
                backlog_bits: backlog,
                ul_start_s,
                ul_end_s,
            });
            frame += 1;
            if backlog == 0.0 {
                break;
            }
        }
        let upload_complete_frame = frame - 1;
        let l_comm_s = (frame - generation_frame) as f64 * t;
        let l_comp_s = model.delay.sample(&mut rng);
        batches.push(BatchRecord {
            batch,
            generation_frame,
            upload_complete_frame,
            compute_done_s: frame as f64 * t + l_comp_s,
            l_comm_s,
            l_comp_s,
            l_tot_s: l_comm_s + l_comp_s,
        });
    }
    Ok(FrameTrace {
        frame_duration_s: t,
        bits_per_batch: n_b,
        bits_per_frame: capacity,
        frames,
        batches,
    })
}

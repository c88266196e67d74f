//! `tsak synth`: generate the synthetic recordings and write one CSV per
//! session under `<run>/sessions/`.

use tsak_core::signal::csvio::write_session_file;
use tsak_core::synth::generate;
use tsak_core::Result;

use crate::runctx::{io_at, RunCtx};

pub fn run(ctx: &RunCtx) -> Result<()> {
    let recordings = generate(&ctx.cfg.synth)?;
    let dir = ctx.sessions_dir();
    std::fs::create_dir_all(&dir).map_err(|e| io_at(&dir, e))?;
    for session in &recordings {
        write_session_file(&dir, session)?;
    }
    ctx.write_manifest("synth", None)?;
    println!(
        "synthesized {} sessions ({} users x {} sessions, {:.0} s each) into {}",
        recordings.len(),
        ctx.cfg.synth.num_users,
        ctx.cfg.synth.sessions_per_user,
        ctx.cfg.synth.session_seconds,
        dir.display()
    );
    Ok(())
}

#![no_main]

use libfuzzer_sys::fuzz_target;
use mnilab::experiments::SweepSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = SweepSpec::from_json_str(text) {
        if let Some(g) = &spec.grid {
            let cells = [g.p.len(), g.q.len(), g.r.len(), g.t.len(), g.n.len()];
            if cells.iter().try_fold(1usize, |a, &b| a.checked_mul(b)).map_or(true, |c| c > 100_000) {
                return;
            }
        }
        for point in spec.grid_points().into_iter().take(4096) {
            let _ = point.validate();
            let _ = point.digest();
        }
    }
});

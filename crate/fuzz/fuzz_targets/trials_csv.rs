#![no_main]

use libfuzzer_sys::fuzz_target;
use mnilab::experiments::{aggregate, parse_trials_csv, phase_diagram, Axis, Classifier, PhaseSpec};

fuzz_target!(|data: &[u8]| {
    let Ok(rows) = parse_trials_csv(data) else { return };
    let Ok(records) = aggregate(&rows) else { return };
    let spec = PhaseSpec { x: Axis::R, y: Axis::T, classifier: Classifier::Mni, n: None };
    if let Ok(diagram) = phase_diagram(&records, &spec) {
        let _ = diagram.to_svg();
    }
});

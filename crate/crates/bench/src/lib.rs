//! Shared fixtures for the benchmarks.

use exfree_core::model::device_cavity_coherence;
use exfree_core::{fock_state, khz_to_angular, ModeDims, StateVector, SystemParams};

/// `g/2pi = 80 kHz` chain at `delta_khz` with the given truncation.
pub fn chain(delta_khz: f64, dims: [usize; 3]) -> SystemParams {
    let g = khz_to_angular(80.0);
    SystemParams::new(
        g,
        g,
        khz_to_angular(delta_khz),
        ModeDims::new(dims.to_vec()).unwrap(),
    )
    .unwrap()
}

/// Same chain with the device cavity coherence attached.
pub fn open_chain(delta_khz: f64, dims: [usize; 3]) -> SystemParams {
    chain(delta_khz, dims)
        .with_coherence(device_cavity_coherence().to_vec())
        .unwrap()
}

/// `|100>` in the chain's basis.
pub fn single_photon(params: &SystemParams) -> StateVector {
    fock_state(&params.dims, &[1, 0, 0]).unwrap()
}

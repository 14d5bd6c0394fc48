//! Helpers shared by unit tests.

use crate::panel::PanelSample;

/// Panel of pseudo-random, almost surely distinct values in `[0, 1.8e5)`.
pub(crate) fn distinct_panel(seed: u64, n: usize, m: usize) -> PanelSample {
    let mut state = seed;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..m)
                .map(|_| {
                    state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
                    let mut z = state;
                    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
                    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
                    z ^= z >> 31;
                    (z >> 11) as f64 * 2e-11
                })
                .collect()
        })
        .collect();
    PanelSample::from_rows(&rows).unwrap()
}

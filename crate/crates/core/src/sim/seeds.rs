/// Independent random streams of one run. Each entity draws from its own
/// stream so that, for example, changing the scheduler never perturbs the
/// datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Stream {
    Task = 1,
    ModelInit,
    ClientData,
    ClientTraining,
    SensorData,
    SensorBatches,
    Corruption,
    Phase,
}

/// SplitMix64 finaliser over `(seed, stream, index)`.
pub(crate) fn derive_seed(seed: u64, stream: Stream, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add((stream as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(index.wrapping_mul(0xd1b5_4a32_d192_ed03));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

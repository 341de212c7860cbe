/// Default number of one-hot slots for display positions.
pub const DEFAULT_POSITION_CAP: usize = 10;

/// One-hot encoding of a 1-based position; positions at or beyond `cap`
/// share the last slot.
pub fn position_encoding(pos: usize, cap: usize) -> Vec<f64> {
    let mut v = vec![0.0; cap];
    write_position_encoding(pos, &mut v);
    v
}

pub(crate) fn write_position_encoding(pos: usize, out: &mut [f64]) {
    let cap = out.len();
    out.iter_mut().for_each(|v| *v = 0.0);
    let slot = pos.clamp(1, cap) - 1;
    out[slot] = 1.0;
}

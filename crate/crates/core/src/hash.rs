//! The fixed 64-bit hash used for key routing and digests.
//!
//! FNV-1a over the input bytes, followed by the splitmix64 finalizer so that
//! the low bits (which pick the shard) depend on every input byte. Every
//! replica and every test oracle must agree on this function bit for bit.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Incremental form of [`hash64`].
#[derive(Clone, Copy, Debug)]
pub struct Hasher64 {
    state: u64,
}

impl Default for Hasher64 {
    fn default() -> Self {
        Self::new()
    }
}

impl Hasher64 {
    pub const fn new() -> Self {
        Self { state: FNV_OFFSET }
    }

    pub fn bytes(&mut self, bytes: &[u8]) -> &mut Self {
        for b in bytes {
            self.state ^= u64::from(*b);
            self.state = self.state.wrapping_mul(FNV_PRIME);
        }
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.bytes(&v.to_le_bytes())
    }

    pub fn i64(&mut self, v: i64) -> &mut Self {
        self.bytes(&v.to_le_bytes())
    }

    pub fn finish(&self) -> u64 {
        mix64(self.state)
    }
}

/// splitmix64 finalizer.
pub const fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn hash64(bytes: &[u8]) -> u64 {
    Hasher64::new().bytes(bytes).finish()
}

//! Deterministic random streams.
//!
//! A run has one master seed. Every consumer of randomness asks for a named
//! stream, so e.g. changing `K` (which draws more permutations) leaves the
//! data order and the reparameterization noise untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Named sub-streams of a master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Data,
    Init,
    Noise,
    Permutation,
    Eval,
    Split,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Data => 0x6461_7461,
            Stream::Init => 0x696e_6974,
            Stream::Noise => 0x6e6f_6973,
            Stream::Permutation => 0x7065_726d,
            Stream::Eval => 0x6576_616c,
            Stream::Split => 0x7370_6c74,
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream `which` for job `job` of master seed `seed`.
pub fn stream(seed: u64, which: Stream, job: u64) -> Rng {
    let mut rng = Rng::seed_from_u64(splitmix(seed ^ splitmix(job)));
    rng.set_stream(which.tag());
    rng
}

/// Fill a vector with standard-normal draws.
pub fn normals(rng: &mut Rng, n: usize) -> Vec<f64> {
    use rand::Rng as _;
    (0..n).map(|_| rng.sample(rand_distr::StandardNormal)).collect()
}

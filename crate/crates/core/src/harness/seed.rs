/// Fields that identify one cell of the run matrix for seeding.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeedKey<'a> {
    pub dataset: &'a str,
    pub model: Option<&'a str>,
    pub strength: Option<f64>,
    pub kind: Option<&'a str>,
    pub level: Option<f64>,
    pub realization: Option<usize>,
}

impl<'a> SeedKey<'a> {
    pub fn dataset(dataset: &'a str) -> Self {
        Self { dataset, model: None, strength: None, kind: None, level: None, realization: None }
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable 64-bit seed for a matrix cell. Absent fields hash differently from
/// any present value, so coarser keys never collide with finer ones by
/// construction.
pub fn derive_seed(base: u64, key: &SeedKey<'_>) -> u64 {
    let mut h = fnv(FNV_OFFSET, &base.to_le_bytes());
    let mut field = |tag: u8, bytes: Option<&[u8]>| {
        h = fnv(h, &[tag]);
        match bytes {
            Some(b) => {
                h = fnv(h, &(b.len() as u64).to_le_bytes());
                h = fnv(h, b);
            }
            None => h = fnv(h, &[0xff]),
        }
    };
    field(1, Some(key.dataset.as_bytes()));
    field(2, key.model.map(str::as_bytes));
    let strength = key.strength.map(|s| s.to_bits().to_le_bytes());
    field(3, strength.as_ref().map(|b| &b[..]));
    field(4, key.kind.map(str::as_bytes));
    let level = key.level.map(|s| s.to_bits().to_le_bytes());
    field(5, level.as_ref().map(|b| &b[..]));
    let real = key.realization.map(|r| (r as u64).to_le_bytes());
    field(6, real.as_ref().map(|b| &b[..]));
    mix(h)
}

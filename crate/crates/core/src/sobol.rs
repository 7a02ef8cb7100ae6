//! Unscrambled base-2 Sobol sequence with Joe-Kuo direction numbers.

use crate::error::{BsvError, Result};

const BITS: u32 = 32;

/// `(s, a, m_1..m_s)` for dimensions 2 onward.
const PARAMS: &[(u32, u32, &[u32])] = &[
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
    (5, 4, &[1, 1, 5, 5, 5]),
    (5, 7, &[1, 1, 7, 11, 19]),
];

pub const MAX_DIM: usize = PARAMS.len() + 1;

#[derive(Clone, Debug)]
pub struct Sobol {
    directions: Vec<[u32; BITS as usize]>,
    index: u64,
    state: Vec<u32>,
}

fn directions(dim: usize) -> [u32; BITS as usize] {
    let mut v = [0u32; BITS as usize];
    if dim == 0 {
        for (k, vk) in v.iter_mut().enumerate() {
            *vk = 1 << (BITS - 1 - k as u32);
        }
        return v;
    }
    let (s, a, m0) = PARAMS[dim - 1];
    let s = s as usize;
    let mut m = vec![0u32; BITS as usize];
    m[..s].copy_from_slice(m0);
    for k in s..BITS as usize {
        let mut mk = m[k - s] ^ (m[k - s] << s);
        for j in 1..s {
            if (a >> (s - 1 - j)) & 1 == 1 {
                mk ^= m[k - j] << j;
            }
        }
        m[k] = mk;
    }
    for k in 0..BITS as usize {
        v[k] = m[k] << (BITS - 1 - k as u32);
    }
    v
}

impl Sobol {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(BsvError::InvalidParameter(format!(
                "Sobol dimension must be in 1..={MAX_DIM}, got {dim}"
            )));
        }
        Ok(Sobol {
            directions: (0..dim).map(directions).collect(),
            index: 0,
            state: vec![0; dim],
        })
    }

    pub fn dim(&self) -> usize {
        self.state.len()
    }

    /// Point `index` of the sequence (`index = 0` is the origin).
    pub fn point(&self, index: u64) -> Vec<f64> {
        let gray = index ^ (index >> 1);
        self.directions
            .iter()
            .map(|v| {
                let mut x = 0u32;
                for (k, vk) in v.iter().enumerate() {
                    if (gray >> k) & 1 == 1 {
                        x ^= vk;
                    }
                }
                x as f64 / (1u64 << BITS) as f64
            })
            .collect()
    }

    /// Next point in Gray-code order, starting after the origin.
    pub fn next_point(&mut self) -> Vec<f64> {
        let c = self.index.trailing_ones() as usize;
        self.index += 1;
        for (s, v) in self.state.iter_mut().zip(&self.directions) {
            *s ^= v[c];
        }
        self.state.iter().map(|&x| x as f64 / (1u64 << BITS) as f64).collect()
    }
}

use rand::Rng as _;

use crate::engine::Tensor;
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParitySample {
    pub x: Vec<u8>,
    pub y: i8,
}

/// `(-1)^<x, v>` over bit vectors.
pub fn parity_label(x: &[u8], v: &[u8]) -> i8 {
    let ones = x.iter().zip(v).filter(|(&a, &b)| a & b & 1 == 1).count();
    if ones % 2 == 0 {
        1
    } else {
        -1
    }
}

pub fn random_bits(d: usize, rng: &mut Rng) -> Vec<u8> {
    (0..d).map(|_| rng.random_range(0..=1u8)).collect()
}

/// The `index`-th point of `{0,1}^d`, bit `i` taken from bit `i` of `index`.
pub fn enumerate_bits(d: usize, index: u64) -> Vec<u8> {
    (0..d).map(|i| ((index >> i) & 1) as u8).collect()
}

fn check_v(d: usize, v_star: &[u8]) -> Result<()> {
    if d < 1 {
        return Err(Error::invalid("parity dimension must be at least 1"));
    }
    if v_star.len() != d || v_star.iter().any(|&b| b > 1) {
        return Err(Error::invalid(format!(
            "v_star must be a {d}-dimensional 0/1 vector"
        )));
    }
    Ok(())
}

/// `count` uniform samples from `{0,1}^d` labeled by the parity of `v_star`.
pub fn gen_parity(d: usize, v_star: &[u8], count: usize, seed: u64) -> Result<Vec<ParitySample>> {
    check_v(d, v_star)?;
    let mut rng = rng::seeded(seed);
    Ok((0..count)
        .map(|_| {
            let x = random_bits(d, &mut rng);
            let y = parity_label(&x, v_star);
            ParitySample { x, y }
        })
        .collect())
}

/// Inputs `[n, d]` as 0.0/1.0 and labels `[n, 1]` as +-1.
pub fn parity_tensors(samples: &[ParitySample]) -> Result<(Tensor, Tensor)> {
    let n = samples.len();
    let d = samples.first().map(|s| s.x.len()).unwrap_or(0);
    let xs = samples
        .iter()
        .flat_map(|s| s.x.iter().map(|&b| b as f64))
        .collect();
    let ys = samples.iter().map(|s| s.y as f64).collect();
    Ok((Tensor::new(vec![n, d], xs)?, Tensor::new(vec![n, 1], ys)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_definition() {
        assert_eq!(parity_label(&[1, 0, 1], &[1, 1, 0]), -1);
        assert_eq!(parity_label(&[1, 1, 1], &[1, 1, 0]), 1);
    }

    #[test]
    fn empty_parity_is_constant() {
        let s = gen_parity(6, &[0; 6], 200, 4).unwrap();
        assert!(s.iter().all(|s| s.y == 1));
    }

    #[test]
    fn full_parity_on_three_bits_is_balanced() {
        let plus = (0..8)
            .map(|i| parity_label(&enumerate_bits(3, i), &[1, 1, 1]))
            .filter(|&y| y == 1)
            .count();
        assert_eq!(plus, 4);
    }

    #[test]
    fn deterministic_and_validated() {
        let v = [1, 0, 1, 1];
        assert_eq!(
            gen_parity(4, &v, 50, 9).unwrap(),
            gen_parity(4, &v, 50, 9).unwrap()
        );
        assert!(gen_parity(0, &[], 1, 0).is_err());
        assert!(gen_parity(3, &[1, 2, 0], 1, 0).is_err());
        for s in gen_parity(4, &v, 50, 9).unwrap() {
            assert_eq!(s.y, parity_label(&s.x, &v));
        }
    }
}

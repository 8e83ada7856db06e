use std::f64::consts::PI;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

pub const DEFAULT_IMAGE_SIZE: usize = 28;

/// A binary image holding one rasterized line segment.
#[derive(Debug, Clone, PartialEq)]
pub struct LineImage {
    /// Row-major `size * size` pixels in {0, 1}.
    pub pixels: Vec<u8>,
    pub size: usize,
    pub theta: f64,
    pub length: f64,
    /// `(column, row)` of the segment midpoint.
    pub center: (usize, usize),
    pub y: i8,
}

impl LineImage {
    pub fn pixel_count(&self) -> usize {
        self.pixels.iter().map(|&p| p as usize).sum()
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.size + col]
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| p as f64).collect()
    }
}

/// +1 for an upward slope (`theta < pi/2`), otherwise -1.
pub fn line_label(theta: f64) -> i8 {
    if theta < PI / 2.0 {
        1
    } else {
        -1
    }
}

/// Draws `ceil(4 * length)` equispaced points along the segment, rounds each
/// to the nearest pixel and sets the in-bounds ones. Rows grow downwards, so
/// an upward slope decreases the row index.
pub fn rasterize(size: usize, theta: f64, length: f64, center: (usize, usize)) -> LineImage {
    let mut pixels = vec![0u8; size * size];
    let points = ((4.0 * length).ceil() as usize).max(2);
    let (dx, dy) = (theta.cos(), -theta.sin());
    let (cx, cy) = (center.0 as f64, center.1 as f64);
    for i in 0..points {
        let s = -length / 2.0 + length * i as f64 / (points - 1) as f64;
        let col = (cx + s * dx).round();
        let row = (cy + s * dy).round();
        if col < 0.0 || row < 0.0 || col >= size as f64 || row >= size as f64 {
            continue;
        }
        pixels[row as usize * size + col as usize] = 1;
    }
    LineImage {
        pixels,
        size,
        theta,
        length,
        center,
        y: line_label(theta),
    }
}

/// `theta ~ U[0, pi]`, `length ~ U[5, size - 5]`, center uniform on the grid.
pub fn sample_line_image(size: usize, rng: &mut Rng) -> Result<LineImage> {
    if size < 11 {
        return Err(Error::invalid(format!("image size {size} is below 11")));
    }
    let theta = rng.random_range(0.0..=PI);
    let length = rng.random_range(5.0..=(size - 5) as f64);
    let center = (rng.random_range(0..size), rng.random_range(0..size));
    Ok(rasterize(size, theta, length, center))
}

pub fn gen_line_image(seed: u64) -> LineImage {
    sample_line_image(DEFAULT_IMAGE_SIZE, &mut rng::seeded(seed)).expect("default size is valid")
}

/// `k` i.i.d. line images whose combined label is the product of their own.
#[derive(Debug, Clone, PartialEq)]
pub struct TupleSample {
    pub images: Vec<LineImage>,
    pub y_parts: Vec<i8>,
    pub y_tilde: i8,
}

impl TupleSample {
    pub fn from_images(images: Vec<LineImage>) -> Self {
        let y_parts: Vec<i8> = images.iter().map(|im| im.y).collect();
        let y_tilde = y_parts.iter().product();
        Self {
            images,
            y_parts,
            y_tilde,
        }
    }
}

pub fn sample_tuple(k: usize, size: usize, rng: &mut Rng) -> Result<TupleSample> {
    if k == 0 {
        return Err(Error::invalid("tuple size must be at least 1"));
    }
    let images = (0..k)
        .map(|_| sample_line_image(size, rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(TupleSample::from_images(images))
}

pub fn gen_tuple(k: usize, seed: u64) -> Result<TupleSample> {
    sample_tuple(k, DEFAULT_IMAGE_SIZE, &mut rng::seeded(seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_follow_angle() {
        assert_eq!(rasterize(28, 0.3, 10.0, (14, 14)).y, 1);
        assert_eq!(rasterize(28, PI / 2.0 + 0.1, 10.0, (14, 14)).y, -1);
        assert_eq!(line_label(PI / 2.0), -1);
    }

    #[test]
    fn horizontal_run() {
        let im = rasterize(28, 0.0, 5.0, (14, 14));
        let row: Vec<u8> = (0..28).map(|c| im.get(14, c)).collect();
        assert!(row.iter().filter(|&&p| p == 1).count() >= 5);
        assert_eq!(
            im.pixel_count(),
            row.iter().map(|&p| p as usize).sum::<usize>()
        );
        let on: Vec<usize> = (0..28).filter(|&c| row[c] == 1).collect();
        assert!(on.windows(2).all(|w| w[1] == w[0] + 1));
    }

    #[test]
    fn upward_slope_decreases_row() {
        let im = rasterize(28, PI / 4.0, 10.0, (14, 14));
        // Right end is above the center.
        let right_col = 17;
        let rows: Vec<usize> = (0..28).filter(|&r| im.get(r, right_col) == 1).collect();
        assert!(rows.iter().all(|&r| r < 14));
    }

    #[test]
    fn tuple_product() {
        let s = gen_tuple(3, 5).unwrap();
        assert_eq!(s.y_tilde, s.y_parts.iter().product::<i8>());
        let one = gen_tuple(1, 8).unwrap();
        assert_eq!(one.y_tilde, one.y_parts[0]);
        assert!(gen_tuple(0, 1).is_err());
    }

    #[test]
    fn deterministic() {
        assert_eq!(gen_line_image(42), gen_line_image(42));
        let im = gen_line_image(42);
        assert!((5.0..=23.0).contains(&im.length));
        assert!(im.center.0 < 28 && im.center.1 < 28);
    }
}

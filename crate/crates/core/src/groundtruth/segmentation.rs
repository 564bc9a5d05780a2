use crate::groundtruth::annotation::AnnotationSet;
use crate::numerics::Tensor4;
use crate::scalar::Scalar;

/// Side of the all-ones block pasted at each head.
pub const TEMPLATE_SIZE: usize = 15;

/// Number of pyramid levels (strides 2, 4 and 8).
pub const SEG_LEVELS: usize = 3;

/// Binary foreground grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<bool>,
}

impl BinaryMap {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![false; height * width],
        }
    }

    pub fn at(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn to_tensor<T: Scalar>(&self) -> Tensor4<T> {
        let data = self.data.iter().map(|&b| if b { T::one() } else { T::zero() }).collect();
        Tensor4::from_vec([1, 1, self.height, self.width], data).expect("dims match")
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut data = self.data.clone();
        for row in data.chunks_mut(self.width.max(1)) {
            row.reverse();
        }
        Self { data, ..*self }
    }

    /// 2×2 stride-2 "any" reduction; odd edges are padded with background.
    pub fn reduce(&self) -> Self {
        let (oh, ow) = (self.height.div_ceil(2), self.width.div_ceil(2));
        let mut out = Self::zeros(oh, ow);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.at(y, x) {
                    out.data[(y / 2) * ow + x / 2] = true;
                }
            }
        }
        out
    }
}

/// Segmentation targets at strides 2, 4 and 8.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegPyramid {
    pub levels: [BinaryMap; SEG_LEVELS],
}

impl SegPyramid {
    pub fn flip_horizontal(&self) -> Self {
        Self {
            levels: self.levels.clone().map(|l| l.flip_horizontal()),
        }
    }

    pub fn stride(level: usize) -> usize {
        2 << level
    }
}

/// Pastes a 15×15 block of ones centred on each rounded head position, clipped to the image.
pub fn encode_segmentation(ann: &AnnotationSet) -> BinaryMap {
    let (h, w) = (ann.height, ann.width);
    let half = (TEMPLATE_SIZE / 2) as i64;
    let mut map = BinaryMap::zeros(h, w);
    for p in &ann.points {
        let cx = (p.x.round() as i64).min(w as i64 - 1);
        let cy = (p.y.round() as i64).min(h as i64 - 1);
        let (x0, x1) = ((cx - half).max(0) as usize, ((cx + half).min(w as i64 - 1)) as usize);
        let (y0, y1) = ((cy - half).max(0) as usize, ((cy + half).min(h as i64 - 1)) as usize);
        for y in y0..=y1 {
            map.data[y * w + x0..=y * w + x1].fill(true);
        }
    }
    map
}

/// Three successive any-of-2×2 reductions, i.e. max-pool then "> 0 becomes 1".
pub fn build_seg_pyramid(s0: &BinaryMap) -> SegPyramid {
    let l1 = s0.reduce();
    let l2 = l1.reduce();
    let l3 = l2.reduce();
    SegPyramid { levels: [l1, l2, l3] }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groundtruth::annotation::Point;

    fn heads(size: usize, pts: &[(f64, f64)]) -> AnnotationSet {
        AnnotationSet::new(size, size, pts.iter().map(|&(x, y)| Point { x, y }).collect()).unwrap()
    }

    #[test]
    fn empty_set_is_background() {
        let s = encode_segmentation(&AnnotationSet::empty(20, 10));
        assert_eq!(s.count_ones(), 0);
        let p = build_seg_pyramid(&s);
        assert!(p.levels.iter().all(|l| l.count_ones() == 0));
    }

    #[test]
    fn one_head_pastes_fifteen_by_fifteen() {
        let s = encode_segmentation(&heads(64, &[(32.0, 32.0)]));
        assert_eq!(s.count_ones(), 225);
        for y in 0..64 {
            for x in 0..64 {
                let inside = (25..=39).contains(&y) && (25..=39).contains(&x);
                assert_eq!(s.at(y, x), inside);
            }
        }
    }

    #[test]
    fn overlapping_heads_take_the_union() {
        let s = encode_segmentation(&heads(64, &[(30.0, 30.0), (35.0, 30.0)]));
        // Enumerate the union of the two blocks.
        let mut expected = 0;
        for y in 0..64i64 {
            for x in 0..64i64 {
                let a = (x - 30).abs() <= 7 && (y - 30).abs() <= 7;
                let b = (x - 35).abs() <= 7 && (y - 30).abs() <= 7;
                if a || b {
                    expected += 1;
                }
            }
        }
        assert_eq!(s.count_ones(), expected);
        assert_eq!(expected, 20 * 15);
        assert!(expected < 450);
    }

    #[test]
    fn border_heads_are_clipped() {
        let s = encode_segmentation(&heads(64, &[(0.0, 0.0), (63.9, 63.9)]));
        assert_eq!(s.count_ones(), 2 * 64);
    }

    #[test]
    fn single_pixel_propagates_to_every_level() {
        let mut s0 = BinaryMap::zeros(8, 8);
        s0.data[0] = true;
        let p = build_seg_pyramid(&s0);
        for (k, level) in p.levels.iter().enumerate() {
            assert_eq!(level.width, 8 >> (k + 1));
            assert!(level.at(0, 0));
            assert_eq!(level.count_ones(), 1);
        }
    }

    #[test]
    fn centred_block_covers_eight_by_eight_at_half_scale() {
        let p = build_seg_pyramid(&encode_segmentation(&heads(64, &[(32.0, 32.0)])));
        // Rows 25..=39 fall in half-scale cells 12..=19.
        assert_eq!(p.levels[0].count_ones(), 64);
        assert_eq!(p.levels[1].count_ones(), 16);
        assert_eq!(p.levels[2].count_ones(), 4);
    }
}

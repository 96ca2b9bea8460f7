/// Binarization threshold for predicted and recorded masks.
pub const MASK_THRESHOLD: f64 = 0.5;

/// Intersection over union of two masks after rounding both at
/// [`MASK_THRESHOLD`]. Two empty masks agree perfectly.
pub fn iou(pred: &[f64], target: &[f64]) -> f64 {
    assert_eq!(
        pred.len(),
        target.len(),
        "iou of masks with different sizes"
    );
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &t) in pred.iter().zip(target) {
        let (p, t) = (p >= MASK_THRESHOLD, t >= MASK_THRESHOLD);
        inter += usize::from(p && t);
        union += usize::from(p || t);
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shifted_block() {
        let mut a = vec![0.0; 16];
        let mut b = vec![0.0; 16];
        for (r, c) in [(1, 1), (1, 2), (2, 1), (2, 2)] {
            a[r * 4 + c] = 1.0;
            b[r * 4 + c + 1] = 1.0;
        }
        assert!((iou(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn empty_masks_agree() {
        assert_eq!(iou(&[0.0; 9], &[0.2; 9]), 1.0);
        assert_eq!(iou(&[0.0, 1.0], &[0.0, 0.0]), 0.0);
        assert_eq!(iou(&[0.5, 0.49], &[1.0, 0.0]), 1.0);
    }
}

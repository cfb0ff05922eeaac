use super::ImageF;
use crate::{Error, Result};

/// Quantile of every value within its own channel, from exact ranks.
///
/// Tied values share their mean rank, so a constant channel sits at 0.5.
fn rank_quantiles(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut q = vec![0.5; n];
    if n < 2 {
        return q;
    }
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end - 1) as f64 / 2.0;
        for &i in &order[start..end] {
            q[i] = rank / (n - 1) as f64;
        }
        start = end;
    }
    q
}

/// Inverse empirical CDF of sorted `values`, linear between order statistics.
fn value_at(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    let t = pos - i as f64;
    if t == 0.0 {
        sorted[i]
    } else {
        sorted[i] + (sorted[j] - sorted[i]) * t
    }
}

/// Remaps each channel of `src` so its value distribution follows `reference`.
///
/// Uses exact empirical CDFs: a source value's rank quantile is looked up in
/// the sorted reference values. With equal pixel counts the output is a
/// permutation of the reference values. A constant source channel maps to the
/// reference median.
pub fn histogram_match(src: &ImageF, reference: &ImageF) -> Result<ImageF> {
    if src.channels() != reference.channels() {
        return Err(Error::shape(format!(
            "histogram_match: {} vs {} channels",
            src.channels(),
            reference.channels()
        )));
    }
    if src.is_empty() || reference.is_empty() {
        return Err(Error::invalid("histogram_match on an empty image"));
    }
    let ch = src.channels();
    let mut out = src.data().to_vec();
    for c in 0..ch {
        let values: Vec<f64> = src.data().iter().skip(c).step_by(ch).copied().collect();
        let mut sorted: Vec<f64> = reference.data().iter().skip(c).step_by(ch).copied().collect();
        sorted.sort_by(f64::total_cmp);
        let quantiles = rank_quantiles(&values);
        for (v, q) in out.iter_mut().skip(c).step_by(ch).zip(quantiles) {
            *v = value_at(&sorted, q);
        }
    }
    Ok(ImageF::from_raw(src.width(), src.height(), ch, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize, c: usize) -> ImageF {
        ImageF::from_fn(w, h, c, |_, _, _| rng.random::<f64>())
    }

    /// Width of one bin of a 1024-bin histogram over the channel's range.
    fn bin_width(img: &ImageF, c: usize) -> f64 {
        let vals: Vec<f64> = img.data().iter().skip(c).step_by(img.channels()).copied().collect();
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (hi - lo) / 1024.0
    }

    #[test]
    fn identity_within_one_bin() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_image(&mut rng, 37, 29, 3);
        let y = histogram_match(&x, &x).unwrap();
        for (i, (a, b)) in x.data().iter().zip(y.data()).enumerate() {
            assert!((a - b).abs() <= bin_width(&x, i % 3), "{a} vs {b}");
        }
    }

    #[test]
    fn halved_source_recovers_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_image(&mut rng, 40, 30, 1);
        let half = x.map(|v| 0.5 * v);
        let y = histogram_match(&half, &x).unwrap();
        let bw = bin_width(&x, 0);
        for (a, b) in x.data().iter().zip(y.data()) {
            assert!((a - b).abs() <= bw);
        }
    }

    #[test]
    fn constant_source_maps_to_reference_median() {
        let reference = ImageF::from_fn(101, 1, 1, |x, _, _| x as f64 / 100.0);
        let src = ImageF::filled(7, 3, 1, 0.9);
        let y = histogram_match(&src, &reference).unwrap();
        let first = y.data()[0];
        assert!(y.data().iter().all(|&v| v == first));
        assert!((first - 0.5).abs() <= bin_width(&reference, 0));
    }

    #[test]
    fn sorted_values_follow_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let (w, h) = (rng.random_range(8..48), rng.random_range(8..48));
            let src = random_image(&mut rng, w, h, 3);
            // different distribution, same pixel count
            let reference = random_image(&mut rng, h, w, 3).map(|v| v * v);
            let out = histogram_match(&src, &reference).unwrap();
            for c in 0..3 {
                let sorted = |img: &ImageF| {
                    let mut v: Vec<f64> = img.data().iter().skip(c).step_by(3).copied().collect();
                    v.sort_by(f64::total_cmp);
                    v
                };
                let bw = bin_width(&reference, c);
                for (a, b) in sorted(&out).iter().zip(sorted(&reference)) {
                    assert!((a - b).abs() <= bw, "channel {c}: {a} vs {b} (bin {bw})");
                }
            }
        }
    }

    #[test]
    fn errors() {
        let a = ImageF::zeros(2, 2, 3);
        assert!(histogram_match(&a, &ImageF::zeros(2, 2, 1)).is_err());
        assert!(histogram_match(&ImageF::zeros(0, 0, 3), &a).is_err());
    }

    #[test]
    fn ties_share_their_rank() {
        assert_eq!(rank_quantiles(&[0.2, 0.1, 0.2, 0.3]), vec![0.5, 0.0, 0.5, 1.0]);
        assert_eq!(rank_quantiles(&[0.7]), vec![0.5]);
        assert_eq!(value_at(&[0.0, 1.0, 4.0], 0.75), 2.5);
    }
}

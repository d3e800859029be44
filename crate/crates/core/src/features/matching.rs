use super::FeatureObservation;
use crate::camera::PixelPoint;
use crate::error::{Error, Result};

/// Fewest correspondences a 6-DOF fit accepts.
pub const MIN_CORRESPONDENCES: usize = 4;

/// Greedy one-to-one nearest-neighbor assignment of detections to predicted
/// model feature positions.
///
/// Pairs are taken in ascending distance order; pairs farther apart than
/// `gate` are never formed. Matched observations carry the index of their
/// prediction and are returned in model order.
pub fn match_features(
    detections: &[FeatureObservation],
    predicted: &[PixelPoint],
    gate: f64,
) -> Result<Vec<FeatureObservation>> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (d, det) in detections.iter().enumerate() {
        for (m, pred) in predicted.iter().enumerate() {
            let dist = (det.position - pred).norm();
            if dist <= gate {
                pairs.push((dist, d, m));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut det_used = vec![false; detections.len()];
    let mut model_used = vec![false; predicted.len()];
    let mut matched = Vec::new();
    for (_, d, m) in pairs {
        if det_used[d] || model_used[m] {
            continue;
        }
        det_used[d] = true;
        model_used[m] = true;
        matched.push(FeatureObservation {
            model_index: Some(m),
            ..detections[d]
        });
    }
    if matched.len() < MIN_CORRESPONDENCES {
        return Err(Error::InsufficientCorrespondence {
            found: matched.len(),
            required: MIN_CORRESPONDENCES,
        });
    }
    matched.sort_by_key(|o| o.model_index);
    Ok(matched)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn grid() -> Vec<PixelPoint> {
        (0..16)
            .map(|i| PixelPoint::new(100.0 + (i % 4) as f64 * 20.0, 80.0 + (i / 4) as f64 * 20.0))
            .collect()
    }

    fn det(p: PixelPoint) -> FeatureObservation {
        FeatureObservation {
            position: p,
            score: 1.0,
            model_index: None,
        }
    }

    /// Exact minimum-cost perfect assignment by dynamic programming over subsets.
    fn optimal_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
        let n = cost.len();
        let full = 1usize << n;
        let mut best = vec![f64::INFINITY; full];
        let mut choice = vec![usize::MAX; full];
        best[0] = 0.0;
        for mask in 0..full {
            if !best[mask].is_finite() {
                continue;
            }
            let row = mask.count_ones() as usize;
            if row == n {
                continue;
            }
            for col in 0..n {
                if mask & (1 << col) == 0 {
                    let next = mask | (1 << col);
                    let c = best[mask] + cost[row][col];
                    if c < best[next] {
                        best[next] = c;
                        choice[next] = col;
                    }
                }
            }
        }
        let mut assignment = vec![0; n];
        let mut mask = full - 1;
        for row in (0..n).rev() {
            let col = choice[mask];
            assignment[row] = col;
            mask &= !(1 << col);
        }
        assignment
    }

    #[test]
    fn exact_detections_match_identically() {
        let preds = grid();
        let dets: Vec<_> = preds.iter().rev().map(|p| det(*p)).collect();
        let m = match_features(&dets, &preds, 3.0).unwrap();
        assert_eq!(m.len(), 16);
        for o in &m {
            assert_eq!(o.position, preds[o.model_index.unwrap()]);
        }
    }

    #[test]
    fn far_detection_is_excluded() {
        let preds = grid();
        let mut dets: Vec<_> = preds.iter().map(|p| det(*p)).collect();
        dets[5].position.x += 6.0;
        let m = match_features(&dets, &preds, 3.0).unwrap();
        assert_eq!(m.len(), 15);
        assert!(m.iter().all(|o| o.model_index != Some(5)));
    }

    #[test]
    fn jittered_detections_match_optimal_assignment() {
        let preds = grid();
        let noise = Normal::new(0.0, 0.3).unwrap();
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dets: Vec<_> = preds
                .iter()
                .map(|p| det(PixelPoint::new(p.x + noise.sample(&mut rng), p.y + noise.sample(&mut rng))))
                .collect();
            let m = match_features(&dets, &preds, 3.0).unwrap();
            assert_eq!(m.len(), 16);
            let cost: Vec<Vec<f64>> = dets
                .iter()
                .map(|d| preds.iter().map(|p| (d.position - p).norm_squared()).collect())
                .collect();
            let optimal = optimal_assignment(&cost);
            for (d, o) in dets.iter().zip(&optimal) {
                let got = m.iter().find(|x| x.position == d.position).unwrap();
                assert_eq!(got.model_index, Some(*o));
            }
        }
    }

    #[test]
    fn too_few_matches() {
        let preds = grid();
        let dets: Vec<_> = preds[..3].iter().map(|p| det(*p)).collect();
        assert!(matches!(
            match_features(&dets, &preds, 3.0),
            Err(Error::InsufficientCorrespondence { found: 3, .. })
        ));
    }
}

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Loss, duplication and uniform delay of the simulated network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetParams {
    pub loss_prob: f64,
    pub dup_prob: f64,
    pub delay_min: u64,
    pub delay_max: u64,
}

impl Default for NetParams {
    fn default() -> Self {
        NetParams {
            loss_prob: 0.15,
            dup_prob: 0.02,
            delay_min: 1,
            delay_max: 20,
        }
    }
}

impl NetParams {
    pub fn reliable(delay_min: u64, delay_max: u64) -> Self {
        NetParams {
            loss_prob: 0.0,
            dup_prob: 0.0,
            delay_min,
            delay_max,
        }
    }

    /// Delivery delays for one send: empty when lost, two entries when
    /// duplicated.
    pub fn draw(&self, rng: &mut ChaCha8Rng) -> Vec<u64> {
        if rng.gen::<f64>() < self.loss_prob {
            return Vec::new();
        }
        let mut out = vec![rng.gen_range(self.delay_min..=self.delay_max)];
        if rng.gen::<f64>() < self.dup_prob {
            out.push(rng.gen_range(self.delay_min..=self.delay_max));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn no_loss_delivers_once() {
        let p = NetParams::reliable(1, 20);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let d = p.draw(&mut rng);
            assert_eq!(d.len(), 1);
            assert!((1..=20).contains(&d[0]));
        }
    }

    #[test]
    fn total_loss_delivers_nothing() {
        let p = NetParams {
            loss_prob: 1.0,
            ..NetParams::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!((0..1000).all(|_| p.draw(&mut rng).is_empty()));
    }

    #[test]
    fn loss_count_is_binomial() {
        let p = NetParams {
            loss_prob: 0.2,
            dup_prob: 0.0,
            ..NetParams::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dropped = (0..10_000).filter(|_| p.draw(&mut rng).is_empty()).count();
        // mean 2000, sigma 40
        assert!((dropped as i64 - 2000).abs() <= 120, "{dropped}");
    }
}

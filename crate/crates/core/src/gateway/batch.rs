use std::num::NonZeroUsize;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::{generate_interpretation, Backend, GatewayError, GenerateRequest, Generated};

pub const DEFAULT_PARALLELISM: usize = 4;

/// Applies `f` to every item with at most `parallelism` calls in flight.
/// Result `i` always belongs to item `i`.
pub fn for_each_ordered<T, R, F>(items: &[T], parallelism: NonZeroUsize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    let workers = parallelism.get().min(items.len());
    if workers <= 1 {
        return items.iter().enumerate().map(|(i, item)| f(i, item)).collect();
    }

    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(item) = items.get(i) else { break };
                let result = f(i, item);
                slots.lock().expect("batch slots poisoned")[i] = Some(result);
            });
        }
    });
    slots
        .into_inner()
        .expect("batch slots poisoned")
        .into_iter()
        .map(|slot| slot.expect("every slot is filled once workers join"))
        .collect()
}

/// Runs every request against `backend`; failures stay in their slot.
pub fn run_batch(
    backend: &dyn Backend,
    requests: &[GenerateRequest],
    parallelism: NonZeroUsize,
) -> Vec<Result<Generated, GatewayError>> {
    for_each_ordered(requests, parallelism, |_, req| {
        generate_interpretation(backend, req)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Fallback, Reply, ScriptedMock};
    use rand::{Rng, SeedableRng};
    use std::time::Duration;

    fn nz(n: usize) -> NonZeroUsize {
        NonZeroUsize::new(n).unwrap()
    }

    fn requests(n: usize) -> Vec<GenerateRequest> {
        (0..n)
            .map(|i| GenerateRequest::new(None, format!("case {i}"), "p").unwrap())
            .collect()
    }

    fn scripted(reqs: &[GenerateRequest]) -> ScriptedMock {
        let mut mock = ScriptedMock::new("gen", Fallback::Error);
        for r in reqs {
            mock.script_text(r, format!("answer to {}", r.prompt));
        }
        mock
    }

    /// Scripted mock wrapper with random latency and an in-flight probe.
    struct Probe {
        inner: ScriptedMock,
        in_flight: AtomicUsize,
        max_in_flight: AtomicUsize,
        delays_us: Vec<u64>,
    }

    impl Backend for Probe {
        fn name(&self) -> &str {
            self.inner.name()
        }

        fn generate(&self, req: &GenerateRequest) -> Result<Reply<String>, GatewayError> {
            let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
            self.max_in_flight.fetch_max(now, Ordering::SeqCst);
            let idx: usize = req.prompt[5..].parse().unwrap();
            std::thread::sleep(Duration::from_micros(self.delays_us[idx]));
            let out = self.inner.generate(req);
            self.in_flight.fetch_sub(1, Ordering::SeqCst);
            out
        }

        fn embed(&self, text: &str) -> Result<Reply<Vec<f64>>, GatewayError> {
            self.inner.embed(text)
        }
    }

    #[test]
    fn five_requests_come_back_in_order() {
        let reqs = requests(5);
        let mock = scripted(&reqs);
        let out = run_batch(&mock, &reqs, nz(4));
        assert_eq!(out.len(), 5);
        for (i, r) in out.iter().enumerate() {
            assert_eq!(r.as_ref().unwrap().text.text, format!("answer to case {i}"));
        }
    }

    #[test]
    fn failing_slot_does_not_abort_batch() {
        let reqs = requests(3);
        let mut mock = ScriptedMock::new("gen", Fallback::Error);
        mock.script_text(&reqs[0], "a");
        mock.script_text(&reqs[2], "c");
        let out = run_batch(&mock, &reqs, nz(2));
        assert!(out[0].is_ok());
        assert!(matches!(out[1], Err(GatewayError::Unscripted { .. })));
        assert!(out[2].is_ok());
    }

    #[test]
    fn in_flight_never_exceeds_parallelism_over_307_requests() {
        let reqs = requests(307);
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        let probe = Probe {
            inner: scripted(&reqs),
            in_flight: AtomicUsize::new(0),
            max_in_flight: AtomicUsize::new(0),
            delays_us: (0..307).map(|_| rng.gen_range(0..400)).collect(),
        };
        let out = run_batch(&probe, &reqs, nz(8));
        assert_eq!(out.len(), 307);
        assert!(out.iter().all(Result::is_ok));
        let max = probe.max_in_flight.load(Ordering::SeqCst);
        assert!(max <= 8, "max in flight {max}");
        assert!(max >= 2, "batch never ran concurrently");
    }

    #[test]
    fn completion_order_never_changes_slot_order() {
        let reqs = requests(40);
        for seed in 0..8 {
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            let probe = Probe {
                inner: scripted(&reqs),
                in_flight: AtomicUsize::new(0),
                max_in_flight: AtomicUsize::new(0),
                delays_us: (0..40).map(|_| rng.gen_range(0..300)).collect(),
            };
            let out = run_batch(&probe, &reqs, nz(6));
            for (i, r) in out.iter().enumerate() {
                assert_eq!(r.as_ref().unwrap().text.text, format!("answer to case {i}"));
            }
        }
    }

    #[test]
    fn serialized_results_are_byte_identical_across_runs() {
        let reqs = requests(20);
        let mut mock = scripted(&reqs[..15]);
        mock.script_failure(&reqs[16], "down");
        let render = || {
            let out: Vec<Result<Generated, String>> = run_batch(&mock, &reqs, nz(4))
                .into_iter()
                .map(|r| r.map_err(|e| e.to_string()))
                .collect();
            crate::canonical::to_canonical_json(&out).unwrap()
        };
        assert_eq!(render(), render());
    }

    #[test]
    fn empty_batch() {
        let mock = ScriptedMock::new("gen", Fallback::Error);
        assert!(run_batch(&mock, &[], nz(4)).is_empty());
    }
}

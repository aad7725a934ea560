//! Enumerate every configuration of a space.

use super::{Evaluate, Frontier, Objective, SearchResult, SearchSpace};
use crate::error::{Error, Result};

/// Spaces beyond this many configurations are refused by default.
pub const DEFAULT_SPACE_CAP: u128 = 100_000;

/// Batch size for parallel evaluation; keeps memory flat on large spaces.
const CHUNK: u128 = 1024;

/// Evaluates configurations in mixed-radix order, so the last one is the top
/// genome.
pub fn exhaustive_search<E: Evaluate>(
    space: &SearchSpace,
    evaluator: &E,
    objective: Objective,
    cap: u128,
) -> Result<SearchResult> {
    let size = space.size();
    if size > cap {
        return Err(Error::SpaceTooLarge { size, cap });
    }
    let mut log = Vec::with_capacity(size as usize);
    let mut start = 0u128;
    while start < size {
        let end = (start + CHUNK).min(size);
        let configs = (start..end).map(|i| space.config(&space.decode(i))).collect::<Result<Vec<_>>>()?;
        log.extend(evaluator.evaluate_batch(&configs)?);
        start = end;
    }
    let frontier = Frontier::from_log(&log, objective);
    Ok(SearchResult { log, frontier, generations_run: 1, stalled: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explore::EvalPoint;
    use crate::fpcore::Width;
    use crate::scope::{Configuration, RuleKind};

    struct Sum;

    impl Evaluate for Sum {
        fn evaluate(&self, c: &Configuration) -> Result<EvalPoint> {
            let s: u32 = c.genome.iter().sum();
            let e = s as f64;
            Ok(EvalPoint {
                config: c.clone(),
                error_pct: 100.0 / e,
                fpu_norm: e,
                mem_norm: e,
                combined_norm: e,
                fpu_pj: e,
                mem_pj: e,
            })
        }
    }

    #[test]
    fn visits_every_configuration_once() {
        let s = SearchSpace::new(RuleKind::Cip, Width::Single, vec!["a".into(), "b".into()], vec![4, 8, 24]).unwrap();
        let r = exhaustive_search(&s, &Sum, Objective::Fpu, DEFAULT_SPACE_CAP).unwrap();
        assert_eq!(r.evaluations(), 9);
        assert_eq!(r.log.last().unwrap().config.genome, vec![24, 24]);
        let mut genomes: Vec<_> = r.log.iter().map(|p| p.config.genome.clone()).collect();
        genomes.dedup();
        assert_eq!(genomes.len(), 9);
    }

    #[test]
    fn whole_program_counts() {
        for (w, n) in [(Width::Single, 24), (Width::Double, 53)] {
            let s = SearchSpace::new(
                RuleKind::Wp,
                w,
                Configuration::whole_program(w, 1).unwrap().targets,
                SearchSpace::full_alphabet(w),
            )
            .unwrap();
            let r = exhaustive_search(&s, &Sum, Objective::Fpu, DEFAULT_SPACE_CAP).unwrap();
            assert_eq!(r.evaluations(), n);
        }
    }

    #[test]
    fn refuses_large_spaces() {
        let targets = (0..5).map(|i| crate::scope::ScopeId::new(format!("s{i}")).unwrap()).collect();
        let s =
            SearchSpace::new(RuleKind::Cip, Width::Single, targets, SearchSpace::full_alphabet(Width::Single)).unwrap();
        assert!(matches!(
            exhaustive_search(&s, &Sum, Objective::Fpu, DEFAULT_SPACE_CAP),
            Err(Error::SpaceTooLarge { .. })
        ));
    }
}

//! Fixtures shared by the benchmarks.

use plangen_core::domains::{generate, BlocksworldParams, DomainParams, Range};
use plangen_core::pddl::{self, GroundedTask};
use plangen_core::world::{validate_actions, SuccessorGenerator};
use plangen_core::{CompiledPlan, GeneratorConfig};
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A grounded Blocksworld problem with exactly `blocks` blocks.
pub fn blocksworld_task(blocks: usize, seed: u64) -> GroundedTask {
    let params = DomainParams::Blocksworld(BlocksworldParams {
        blocks: Range::new(blocks, blocks),
        goal_omit_prob: 0.3,
        log_count_distribution: false,
    });
    let set = generate(&GeneratorConfig::new(params, 1, seed)).expect("generator");
    let p = &set.problems[0].problem;
    pddl::ground(set.domain.domain_def(), p).expect("grounding")
}

/// `len` applicable actions chosen uniformly from the initial state.
pub fn random_walk(task: &GroundedTask, len: usize, seed: u64) -> Vec<u32> {
    let gen = SuccessorGenerator::new(task);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = task.init.clone();
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        let Some(&a) = gen.applicable(&s).choose(&mut rng) else {
            break;
        };
        s = plangen_core::world::apply(&s, &task.actions[a as usize]);
        out.push(a);
    }
    out
}

/// `count` compiled random walks of length `len`.
pub fn compiled_walks(task: &GroundedTask, count: usize, len: usize, seed: u64) -> Vec<CompiledPlan> {
    (0..count)
        .map(|i| validate_actions(task, &random_walk(task, len, seed.wrapping_add(i as u64))))
        .collect()
}

//! The N-party Svetlichny game.
//!
//! A referee draws question bits `q_1 … q_N` uniformly; players answer bits
//! `a_1 … a_N` and win iff `a_1 ⊕ … ⊕ a_N = floor(T/2) mod 2`, where `T` counts
//! the questions equal to 1. For `N = 2` this is the CHSH game.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matcore::{self, ComplexMatrix};
use crate::nonlocality::{question_bit, SettingsTable};
use crate::seeding::{self, DOMAIN_ANSWERS, DOMAIN_QUESTIONS};
use crate::states::DensityMatrix;

pub const MAX_PARTIES: usize = 4;

/// Upper limit on deterministic strategies examined per grouping.
pub const MAX_STRATEGIES: u64 = 1 << 24;

const ROUND_BLOCK: u64 = 4096;

/// Players and the groups they are split into. Players inside a group may
/// answer as an arbitrary joint function of the group's questions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GameSpec {
    parties: usize,
    /// 0-based player indices per group.
    groups: Vec<Vec<usize>>,
}

impl GameSpec {
    pub fn new(parties: usize, groups: Vec<Vec<usize>>) -> Result<Self> {
        if !(2..=MAX_PARTIES).contains(&parties) {
            return Err(Error::Arity(format!("games need 2..={MAX_PARTIES} players, got {parties}")));
        }
        let mut seen = vec![false; parties];
        for g in &groups {
            if g.is_empty() {
                return Err(Error::Arity("groups must be non-empty".into()));
            }
            for &p in g {
                if p >= parties || seen[p] {
                    return Err(Error::Arity(format!("player {} repeated or out of range", p + 1)));
                }
                seen[p] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Arity("groups must cover every player".into()));
        }
        Ok(Self { parties, groups })
    }

    /// Every player on their own (local hidden variables).
    pub fn local(parties: usize) -> Result<Self> {
        Self::new(parties, (0..parties).map(|p| vec![p]).collect())
    }

    /// Two groups: `first` and everyone else.
    pub fn bipartition(parties: usize, first: &[usize]) -> Result<Self> {
        let rest = (0..parties).filter(|p| !first.contains(p)).collect();
        Self::new(parties, vec![first.to_vec(), rest])
    }

    /// All unordered splits into two non-empty groups.
    pub fn all_bipartitions(parties: usize) -> Result<Vec<Self>> {
        if !(2..=MAX_PARTIES).contains(&parties) {
            return Err(Error::Arity(format!("games need 2..={MAX_PARTIES} players, got {parties}")));
        }
        // the last player always sits in the second group
        (1..(1usize << (parties - 1)))
            .map(|mask| {
                let first: Vec<usize> = (0..parties - 1).filter(|p| mask >> p & 1 == 1).collect();
                Self::bipartition(parties, &first)
            })
            .collect()
    }

    pub fn parties(&self) -> usize {
        self.parties
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    /// Relabels players: new player `k` is old player `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let mut inverse = vec![0; self.parties];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let groups = self.groups.iter().map(|g| g.iter().map(|&p| inverse[p]).collect()).collect();
        Self::new(self.parties, groups)
    }
}

/// Deterministic response of one group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroupStrategy {
    pub members: Vec<usize>,
    /// `table[x]` is the members' answer bits for question bits `x`; first
    /// member is the most significant bit in both.
    pub table: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StrategyHybrid {
    pub groups: Vec<GroupStrategy>,
}

impl StrategyHybrid {
    /// Answer bits for a full question vector.
    pub fn answers(&self, questions: &[u8]) -> Vec<u8> {
        let n: usize = self.groups.iter().map(|g| g.members.len()).sum();
        let mut out = vec![0u8; n];
        for g in &self.groups {
            let m = g.members.len();
            let input = g
                .members
                .iter()
                .fold(0usize, |acc, &p| (acc << 1) | questions[p] as usize);
            let bits = g.table[input];
            for (i, &p) in g.members.iter().enumerate() {
                out[p] = ((bits >> (m - 1 - i)) & 1) as u8;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GameMode {
    Exact,
    MonteCarlo,
    Enumerated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GameResult {
    pub mode: GameMode,
    pub win_probability: f64,
    /// Exact value `numerator / denominator` for enumerated results.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact: Option<(u64, u64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wins: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rounds: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategy: Option<StrategyHybrid>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub settings: Option<SettingsTable>,
}

impl GameResult {
    fn new(mode: GameMode, win_probability: f64) -> Self {
        Self {
            mode,
            win_probability,
            exact: None,
            stderr: None,
            wins: None,
            rounds: None,
            strategy: None,
            settings: None,
        }
    }
}

/// Required answer parity for a question bitmask.
fn target_parity(question: usize) -> u32 {
    (question.count_ones() / 2) % 2
}

fn wins_mask(question: usize, answers: usize) -> bool {
    answers.count_ones() % 2 == target_parity(question)
}

/// True iff the XOR of the answers equals `floor(T/2) mod 2`.
pub fn win_predicate(questions: &[u8], answers: &[u8]) -> Result<bool> {
    if questions.len() != answers.len() {
        return Err(Error::Arity(format!(
            "{} questions but {} answers",
            questions.len(),
            answers.len()
        )));
    }
    if questions.iter().chain(answers).any(|&b| b > 1) {
        return Err(Error::Arity("questions and answers must be bits".into()));
    }
    let t = questions.iter().filter(|&&q| q == 1).count();
    let parity = answers.iter().fold(0u8, |acc, &a| acc ^ a);
    Ok(parity as usize == (t / 2) % 2)
}

/// Exact maximum winning probability over deterministic strategies for the
/// spec's grouping, by exhaustive enumeration.
pub fn enumerate_classical(spec: &GameSpec) -> Result<GameResult> {
    let n = spec.parties();
    let radices: Vec<u64> = spec
        .groups()
        .iter()
        .map(|g| {
            let outputs = 1u64 << g.len();
            outputs.checked_pow(1 << g.len()).unwrap_or(u64::MAX)
        })
        .collect();
    let total = radices
        .iter()
        .try_fold(1u64, |acc, &r| acc.checked_mul(r))
        .filter(|&t| t <= MAX_STRATEGIES)
        .ok_or_else(|| {
            Error::Budget(format!("grouping {:?} exceeds {MAX_STRATEGIES} strategies", spec.groups()))
        })?;

    // per group and function index, the parity of the group's answers for each input
    let parity_tables: Vec<Vec<u32>> = spec
        .groups()
        .iter()
        .zip(&radices)
        .map(|(g, &count)| {
            (0..count)
                .map(|f| {
                    let table = decode_table(f, g.len());
                    table.iter().enumerate().fold(0u32, |acc, (x, bits)| {
                        acc | ((bits.count_ones() & 1) << x)
                    })
                })
                .collect()
        })
        .collect();
    let group_inputs: Vec<Vec<usize>> = (0..(1usize << n))
        .map(|question| {
            spec.groups()
                .iter()
                .map(|g| {
                    g.iter()
                        .fold(0usize, |acc, &p| (acc << 1) | question_bit(question, p, n))
                })
                .collect()
        })
        .collect();

    let score = |index: u64| -> u32 {
        let mut digits = Vec::with_capacity(radices.len());
        let mut rest = index;
        for &r in &radices {
            digits.push(rest % r);
            rest /= r;
        }
        (0..(1usize << n))
            .filter(|&question| {
                let parity = digits
                    .iter()
                    .enumerate()
                    .fold(0u32, |acc, (gi, &f)| {
                        acc ^ (parity_tables[gi][f as usize] >> group_inputs[question][gi]) & 1
                    });
                parity == target_parity(question)
            })
            .count() as u32
    };

    let (wins, best) = (0..total)
        .into_par_iter()
        .map(|i| (score(i), i))
        // most wins, then the smallest index
        .reduce(|| (0, u64::MAX), |a, b| if (a.0, std::cmp::Reverse(a.1)) >= (b.0, std::cmp::Reverse(b.1)) { a } else { b });

    let mut rest = best;
    let groups = spec
        .groups()
        .iter()
        .zip(&radices)
        .map(|(g, &r)| {
            let f = rest % r;
            rest /= r;
            GroupStrategy { members: g.clone(), table: decode_table(f, g.len()) }
        })
        .collect();

    let questions = 1u64 << n;
    let mut result = GameResult::new(GameMode::Enumerated, wins as f64 / questions as f64);
    result.exact = Some((wins as u64, questions));
    result.strategy = Some(StrategyHybrid { groups });
    Ok(result)
}

/// Function index -> answer table for a group of `size` players.
fn decode_table(mut index: u64, size: usize) -> Vec<u32> {
    let outputs = 1u64 << size;
    (0..(1usize << size))
        .map(|_| {
            let v = (index % outputs) as u32;
            index /= outputs;
            v
        })
        .collect()
}

/// Svetlichny bound: the best enumerated value over every bipartition.
/// Returns the maximizing result and the number of bipartitions examined.
pub fn svetlichny_bound(parties: usize) -> Result<(GameResult, usize)> {
    let specs = GameSpec::all_bipartitions(parties)?;
    let mut best: Option<GameResult> = None;
    for spec in &specs {
        let r = enumerate_classical(spec)?;
        if best.as_ref().is_none_or(|b| r.exact.unwrap().0 > b.exact.unwrap().0) {
            best = Some(r);
        }
    }
    Ok((best.expect("at least one bipartition"), specs.len()))
}

/// Born-rule answer distribution `P(A|J)` for every question, indexed
/// `[question][answers]` with player 1 in the most significant bit.
pub fn answer_distributions(rho: &DensityMatrix, settings: &SettingsTable) -> Result<Vec<Vec<f64>>> {
    let n = rho.qubits();
    if settings.parties() != n {
        return Err(Error::Dimension(format!("{}-party settings on a {n}-qubit state", settings.parties())));
    }
    if !(2..=MAX_PARTIES).contains(&n) {
        return Err(Error::Dimension(format!("games need 2..={MAX_PARTIES} players, got {n}")));
    }
    let id = ComplexMatrix::identity(2);
    // projectors[k][q][a] = (I + (-1)^a A_{k,q}) / 2
    let projectors: Vec<[[ComplexMatrix; 2]; 2]> = settings
        .rows()
        .iter()
        .map(|pair| {
            pair.map(|s| {
                let obs = s.observable();
                [
                    id.add(&obs).expect("2x2").scale(0.5),
                    id.sub(&obs).expect("2x2").scale(0.5),
                ]
            })
        })
        .collect();

    (0..(1usize << n))
        .map(|question| {
            (0..(1usize << n))
                .map(|answers| {
                    let factors: Vec<&ComplexMatrix> = (0..n)
                        .map(|k| {
                            &projectors[k][question_bit(question, k, n)][question_bit(answers, k, n)]
                        })
                        .collect();
                    let proj = matcore::kron_all(factors)?;
                    Ok(rho.matrix().trace_product(&proj)?.re)
                })
                .collect()
        })
        .collect()
}

fn check_spec(rho: &DensityMatrix, spec: &GameSpec) -> Result<()> {
    if spec.parties() != rho.qubits() {
        return Err(Error::Dimension(format!(
            "{}-player game on a {}-qubit state",
            spec.parties(),
            rho.qubits()
        )));
    }
    Ok(())
}

/// `Pr = 2^{-N} Σ_J Σ_A δ_JA P(A|J)` from Born-rule probabilities.
pub fn quantum_win_exact(rho: &DensityMatrix, settings: &SettingsTable, spec: &GameSpec) -> Result<GameResult> {
    check_spec(rho, spec)?;
    let dist = answer_distributions(rho, settings)?;
    let total: f64 = dist
        .iter()
        .enumerate()
        .map(|(question, probs)| {
            probs
                .iter()
                .enumerate()
                .filter(|&(answers, _)| wins_mask(question, answers))
                .map(|(_, p)| p)
                .sum::<f64>()
        })
        .sum();
    let mut result = GameResult::new(GameMode::Exact, total / dist.len() as f64);
    result.settings = Some(settings.clone());
    Ok(result)
}

/// Plays `rounds` rounds with uniformly drawn questions and Born-rule answers.
///
/// Rounds are processed in fixed blocks, each with its own question and answer
/// streams, so the win count depends only on `seed`.
pub fn simulate_rounds(
    rho: &DensityMatrix,
    settings: &SettingsTable,
    spec: &GameSpec,
    rounds: u64,
    seed: u64,
) -> Result<GameResult> {
    if rounds == 0 {
        return Err(Error::Domain("rounds must be positive".into()));
    }
    check_spec(rho, spec)?;
    let dist = answer_distributions(rho, settings)?;
    let cdfs: Vec<Vec<f64>> = dist
        .iter()
        .map(|probs| {
            let mut acc = 0.0;
            probs.iter().map(|p| {
                acc += p.max(0.0);
                acc
            }).collect()
        })
        .collect();
    let questions = cdfs.len();

    let blocks = rounds.div_ceil(ROUND_BLOCK);
    let wins: u64 = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let len = ROUND_BLOCK.min(rounds - b * ROUND_BLOCK);
            let mut q_rng = seeding::stream_rng(seed, DOMAIN_QUESTIONS, b);
            let mut a_rng = seeding::stream_rng(seed, DOMAIN_ANSWERS, b);
            (0..len)
                .filter(|_| {
                    let question = q_rng.random_range(0..questions);
                    let cdf = &cdfs[question];
                    let u = a_rng.random::<f64>() * cdf[cdf.len() - 1];
                    let answers = cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1);
                    wins_mask(question, answers)
                })
                .count() as u64
        })
        .sum();

    let p = wins as f64 / rounds as f64;
    let mut result = GameResult::new(GameMode::MonteCarlo, p);
    result.stderr = Some((p * (1.0 - p) / rounds as f64).sqrt());
    result.wins = Some(wins);
    result.rounds = Some(rounds);
    result.settings = Some(settings.clone());
    Ok(result)
}

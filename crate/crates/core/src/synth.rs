//! Deterministic synthetic collections for demos, fixtures and benchmarks.
//!
//! Every generator is driven by a seeded ChaCha8 stream, so a given seed
//! always produces the same records.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::types::{Address, TimeRange, TokenId, TransactionRecord, Wei};

/// 2022-01-01T00:00:00Z.
pub const EPOCH_2022: u64 = 1_640_995_200;
const DAY: u64 = 86_400;
const FINNEY: u128 = 1_000_000_000_000_000;
/// Ring tokens are numbered from here so they never collide with background
/// tokens.
const RING_TOKEN_BASE: u128 = 1_000_000;

/// Address `i` of family `tag`. `tag` must be non-zero so the result never
/// equals the mint address.
pub fn synthetic_address(tag: u8, i: u32) -> Address {
    assert!(tag != 0, "tag 0 could produce the zero address");
    let mut bytes = [0u8; 20];
    bytes[0] = tag;
    bytes[16..].copy_from_slice(&i.to_be_bytes());
    Address(bytes)
}

/// A collusion ring: members pass tokens around a cycle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RingSpec {
    /// Number of members, at least 3.
    pub members: usize,
    /// Distinct tokens circulated.
    pub tokens: usize,
    /// Transactions between each pair of neighbours on the cycle. Must be at
    /// least `tokens`.
    pub trades_per_pair: u32,
    /// Period the ring trades in.
    pub window: TimeRange,
    /// Every `transfer_every`-th hop carries no value. 0 disables transfers.
    pub transfer_every: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthSpec {
    pub seed: u64,
    pub background_tx: usize,
    pub background_addresses: usize,
    /// Background timestamps are drawn from this range.
    pub period: TimeRange,
    pub rings: Vec<RingSpec>,
}

/// Ground truth for one planted ring.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlantedRing {
    /// Members in cycle order.
    pub members: Vec<Address>,
    pub tokens: Vec<TokenId>,
    pub window: TimeRange,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthCollection {
    /// Records in generation order, not sorted.
    pub records: Vec<TransactionRecord>,
    pub rings: Vec<PlantedRing>,
}

impl SynthSpec {
    /// One 4-member ring passing 2 tokens 50 times along each edge over two
    /// months, hidden in 5,000 background transactions among 200 addresses
    /// across 2022.
    pub fn planted_ring(seed: u64) -> Self {
        SynthSpec {
            seed,
            background_tx: 5_000,
            background_addresses: 200,
            period: TimeRange { start: EPOCH_2022, end: EPOCH_2022 + 365 * DAY - 1 },
            rings: vec![RingSpec {
                members: 4,
                tokens: 2,
                trades_per_pair: 50,
                window: TimeRange { start: EPOCH_2022 + 120 * DAY, end: EPOCH_2022 + 181 * DAY },
                transfer_every: 7,
            }],
        }
    }

    /// 100,000 transactions over 5,000 addresses with a dozen small rings.
    pub fn performance(seed: u64) -> Self {
        let period = TimeRange { start: EPOCH_2022, end: EPOCH_2022 + 365 * DAY - 1 };
        let rings = (0..12u64)
            .map(|k| {
                let start = period.start + k * 28 * DAY;
                RingSpec {
                    members: 3 + (k as usize % 4),
                    tokens: 1 + (k as usize % 3),
                    trades_per_pair: 30 + 5 * k as u32,
                    window: TimeRange { start, end: start + 45 * DAY },
                    transfer_every: 5,
                }
            })
            .collect::<Vec<_>>();
        let ring_tx: usize = rings.iter().map(|r| r.members * r.trades_per_pair as usize + r.tokens).sum();
        SynthSpec {
            seed,
            background_tx: 100_000 - ring_tx,
            background_addresses: 5_000 - rings.iter().map(|r| r.members).sum::<usize>(),
            period,
            rings,
        }
    }
}

fn price(rng: &mut ChaCha8Rng) -> Wei {
    Wei(rng.gen_range(1..=2_000u128) * FINNEY)
}

pub fn generate(spec: &SynthSpec) -> SynthCollection {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut records = Vec::with_capacity(spec.background_tx + 4096);

    let background: Vec<Address> =
        (0..spec.background_addresses as u32).map(|i| synthetic_address(1, i)).collect();
    generate_background(&mut rng, &background, spec.background_tx, spec.period, &mut records);

    let mut rings = Vec::with_capacity(spec.rings.len());
    for (k, ring) in spec.rings.iter().enumerate() {
        rings.push(generate_ring(&mut rng, k as u32, ring, &mut records));
    }
    SynthCollection { records, rings }
}

/// Background tokens each follow a random holder chain. A token never moves
/// twice between the same two addresses, so every background pair trades
/// distinct tokens only.
fn generate_background(
    rng: &mut ChaCha8Rng,
    addresses: &[Address],
    count: usize,
    period: TimeRange,
    out: &mut Vec<TransactionRecord>,
) {
    if count == 0 {
        return;
    }
    assert!(addresses.len() >= 3, "background needs at least 3 addresses");
    let mut produced = 0usize;
    let mut token = 0u128;
    while produced < count {
        let len = rng.gen_range(1..=9usize).min(count - produced);
        let mut stamps: Vec<u64> = (0..len).map(|_| rng.gen_range(period.start..=period.end)).collect();
        stamps.sort_unstable();
        let mut used: HashSet<(usize, usize)> = HashSet::new();
        let mut holder = rng.gen_range(0..addresses.len());
        let mint_value = if rng.gen_bool(0.5) { Wei::ZERO } else { price(rng) };
        out.push(TransactionRecord::new(stamps[0], TokenId(token), mint_value, Address::ZERO, addresses[holder]));
        for &ts in &stamps[1..] {
            let next = loop {
                let c = rng.gen_range(0..addresses.len());
                if c != holder && !used.contains(&(holder.min(c), holder.max(c))) {
                    break c;
                }
            };
            used.insert((holder.min(next), holder.max(next)));
            let value = if rng.gen_bool(0.1) { Wei::ZERO } else { price(rng) };
            out.push(TransactionRecord::new(ts, TokenId(token), value, addresses[holder], addresses[next]));
            holder = next;
        }
        produced += len;
        token += 1;
    }
}

fn generate_ring(
    rng: &mut ChaCha8Rng,
    index: u32,
    ring: &RingSpec,
    out: &mut Vec<TransactionRecord>,
) -> PlantedRing {
    assert!(ring.members >= 3, "a ring needs at least 3 members");
    assert!(ring.tokens >= 1 && ring.trades_per_pair as usize >= ring.tokens);
    let members: Vec<Address> =
        (0..ring.members as u32).map(|i| synthetic_address(2 + index as u8, i)).collect();
    let tokens: Vec<TokenId> = (0..ring.tokens as u128)
        .map(|t| TokenId(RING_TOKEN_BASE * (index as u128 + 1) + t))
        .collect();

    let hops = ring.trades_per_pair as usize * ring.members;
    let steps = (hops + tokens.len()) as u64;
    let span = ring.window.span();
    let stamp = |i: u64| ring.window.start + span * i / steps.max(1);
    let mut step = 0u64;
    for token in &tokens {
        out.push(TransactionRecord::new(stamp(step), *token, price(rng), Address::ZERO, members[0]));
        step += 1;
    }
    let mut hop = 0usize;
    for lap in 0..ring.trades_per_pair as usize {
        let token = tokens[lap % tokens.len()];
        for m in 0..ring.members {
            hop += 1;
            let transfer = ring.transfer_every > 0 && hop.is_multiple_of(ring.transfer_every);
            let value = if transfer { Wei::ZERO } else { price(rng) };
            let (from, to) = (members[m], members[(m + 1) % ring.members]);
            out.push(TransactionRecord::new(stamp(step), token, value, from, to));
            step += 1;
        }
    }
    PlantedRing { members, tokens, window: ring.window }
}

/// Parameters for [`random_log`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomLogSpec {
    pub transactions: usize,
    pub addresses: usize,
    pub tokens: usize,
    pub start: u64,
    /// Largest gap between consecutive timestamps. 0 puts every record at
    /// `start`.
    pub max_gap: u64,
    /// Percentage of non-mint transactions that carry no value.
    pub transfer_percent: u32,
}

/// A log in which every token is minted first and then moves from its
/// current holder to a different address. Addresses are drawn from a
/// skewed pool, so some pairs trade repeatedly.
pub fn random_log(seed: u64, spec: &RandomLogSpec) -> Vec<TransactionRecord> {
    assert!(spec.addresses >= 2 && spec.tokens >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let addresses: Vec<Address> = (0..spec.addresses as u32).map(|i| synthetic_address(9, i)).collect();
    // Half the draws come from a small hot set.
    let hot = (spec.addresses / 5).max(2);
    let pick = |rng: &mut ChaCha8Rng| {
        if rng.gen_bool(0.5) {
            rng.gen_range(0..hot)
        } else {
            rng.gen_range(0..spec.addresses)
        }
    };
    let mut holders: Vec<Option<usize>> = vec![None; spec.tokens];
    let mut t = spec.start;
    let mut out = Vec::with_capacity(spec.transactions);
    for _ in 0..spec.transactions {
        if spec.max_gap > 0 {
            t += rng.gen_range(0..=spec.max_gap);
        }
        let token = rng.gen_range(0..spec.tokens);
        let to = pick(&mut rng);
        let (from, to, value) = match holders[token] {
            None => (Address::ZERO, to, price(&mut rng)),
            Some(from) => {
                let to = if to == from { (to + 1) % spec.addresses } else { to };
                let value = if rng.gen_range(0..100) < spec.transfer_percent { Wei::ZERO } else { price(&mut rng) };
                (addresses[from], to, value)
            }
        };
        holders[token] = Some(to);
        out.push(TransactionRecord::new(t, TokenId(token as u128), value, from, addresses[to]));
    }
    out
}

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::weights::{resolve_weights, StakeOp, StakeState};
use crate::block_dag::{NodeId, Position, Round};
use crate::ordering::SealedStakeOp;
use crate::trb::Value;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StakeError {
    #[error("an epoch needs at least one round")]
    EmptyEpoch,
    #[error("position {0} of the epoch is undecided")]
    IncompleteEpoch(Position),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochConfig {
    rounds_per_epoch: u64,
    pub epoch: u64,
}

impl EpochConfig {
    pub fn new(rounds_per_epoch: u64, epoch: u64) -> Result<Self, StakeError> {
        if rounds_per_epoch == 0 {
            return Err(StakeError::EmptyEpoch);
        }
        Ok(Self {
            rounds_per_epoch,
            epoch,
        })
    }

    pub fn rounds_per_epoch(&self) -> u64 {
        self.rounds_per_epoch
    }

    pub fn rounds(&self) -> Range<Round> {
        self.epoch * self.rounds_per_epoch..(self.epoch + 1) * self.rounds_per_epoch
    }

    pub fn next(&self) -> Self {
        Self {
            epoch: self.epoch + 1,
            ..*self
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Payout {
    pub fees: u64,
    pub slashing: u64,
    /// Stake returned by an unlock.
    pub released: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochOutcome {
    pub next: StakeState,
    pub payouts: BTreeMap<NodeId, Payout>,
    /// Stake removed per offending node.
    pub slashed: BTreeMap<NodeId, u64>,
    /// Amounts with no eligible recipient (every candidate had zero weight).
    pub undistributed_fees: u64,
    pub undistributed_slash: u64,
}

/// Splits `amount` proportionally to `weights`; the rounding remainder goes
/// to the lowest NodeId with nonzero weight. Returns None if all weights are zero.
pub fn split_proportional(
    amount: u64,
    weights: &BTreeMap<NodeId, u128>,
) -> Option<BTreeMap<NodeId, u64>> {
    let total: u128 = weights.values().sum();
    if total == 0 {
        return None;
    }
    let mut shares: BTreeMap<NodeId, u64> = weights
        .iter()
        .filter(|(_, &w)| w > 0)
        .map(|(&n, &w)| (n, (u128::from(amount) * w / total) as u64))
        .collect();
    let given: u64 = shares.values().sum();
    let first = *shares.keys().next().expect("some weight is nonzero");
    *shares.get_mut(&first).expect("present") += amount - given;
    Some(shares)
}

/// Takes `amount` out of `node`'s contributors in proportion to what each
/// contributed; rounding leftovers come from the lowest locker ids first.
fn debit_contributors(
    stake: &StakeState,
    locked: &mut BTreeMap<NodeId, u64>,
    node: NodeId,
    amount: u64,
) {
    let contrib = stake.contributors(node);
    let total: u64 = contrib.values().sum();
    if total == 0 || amount == 0 {
        return;
    }
    let mut left = amount;
    for (&l, &c) in &contrib {
        let d = (u128::from(amount) * u128::from(c) / u128::from(total)) as u64;
        let slot = locked.get_mut(&l).expect("contributor holds a lock");
        let d = d.min(*slot);
        *slot -= d;
        left -= d;
    }
    for &l in contrib.keys() {
        let slot = locked.get_mut(&l).expect("contributor holds a lock");
        let d = left.min(*slot);
        *slot -= d;
        left -= d;
    }
}

/// Closes an epoch: slashes, pays out fees and slashed stake, releases
/// unlocked stake, and applies stake operations sealed during the epoch.
pub fn epoch_close(
    stake: &StakeState,
    epoch: &EpochConfig,
    n_nodes: u32,
    decisions: &BTreeMap<Position, Value>,
    equivocators: &BTreeSet<NodeId>,
    collected_fees: u64,
    sealed: &[SealedStakeOp],
) -> Result<EpochOutcome, StakeError> {
    let r = epoch.rounds_per_epoch();
    let mut nils: BTreeMap<NodeId, u64> = BTreeMap::new();
    let mut decided_blocks: BTreeMap<NodeId, u64> = BTreeMap::new();
    for k in epoch.rounds() {
        for n in 0..n_nodes {
            let pos = Position::new(n, k);
            match decisions
                .get(&pos)
                .ok_or(StakeError::IncompleteEpoch(pos))?
            {
                Value::Nil => *nils.entry(n).or_default() += 1,
                Value::Block(_) => *decided_blocks.entry(n).or_default() += 1,
            }
        }
    }

    let mut locked = stake.locked.clone();
    let mut slashed: BTreeMap<NodeId, u64> = BTreeMap::new();
    for (&n, &count) in &nils {
        if equivocators.contains(&n) {
            continue;
        }
        let amount = (stake.weight(n) / r * count).min(stake.weight(n));
        if amount > 0 {
            debit_contributors(stake, &mut locked, n, amount);
            slashed.insert(n, amount);
        }
    }
    for &n in equivocators {
        let amount = stake.weight(n);
        if amount > 0 {
            debit_contributors(stake, &mut locked, n, amount);
            slashed.insert(n, amount);
        }
    }

    let weight_of = |m: NodeId| -> u128 {
        if equivocators.contains(&m) {
            return 0;
        }
        u128::from(decided_blocks.get(&m).copied().unwrap_or(0)) * u128::from(stake.weight(m))
    };
    let all: BTreeMap<NodeId, u128> = (0..n_nodes).map(|m| (m, weight_of(m))).collect();

    let mut payouts: BTreeMap<NodeId, Payout> = BTreeMap::new();
    let mut undistributed_fees = 0;
    match split_proportional(collected_fees, &all) {
        Some(shares) => {
            for (m, s) in shares {
                payouts.entry(m).or_default().fees += s;
            }
        }
        None => undistributed_fees = collected_fees,
    }
    let mut undistributed_slash = 0;
    for (&n, &amount) in &slashed {
        let mut others = all.clone();
        others.insert(n, 0);
        match split_proportional(amount, &others) {
            Some(shares) => {
                for (m, s) in shares {
                    payouts.entry(m).or_default().slashing += s;
                }
            }
            None => undistributed_slash += amount,
        }
    }

    for &n in &stake.unlocking {
        let amount = locked.remove(&n).unwrap_or(0);
        if amount > 0 {
            payouts.entry(n).or_default().released += amount;
        }
    }
    let mut delegations = stake.delegations.clone();
    let mut unlocking = BTreeSet::new();
    for s in sealed {
        match s.op {
            StakeOp::Lock { node, amount } => *locked.entry(node).or_default() += amount,
            StakeOp::Delegate { node, to } => {
                delegations.insert(node, to);
            }
            StakeOp::Unlock { node } => {
                unlocking.insert(node);
            }
        }
    }
    locked.retain(|_, a| *a > 0);
    let mut next = resolve_weights(locked, delegations);
    next.unlocking = unlocking;
    Ok(EpochOutcome {
        next,
        payouts,
        slashed,
        undistributed_fees,
        undistributed_slash,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::block_dag::BlockHash;
    use crate::ordering::AccountId;

    fn all_decided(n: u32, epoch: &EpochConfig, nil: &[Position]) -> BTreeMap<Position, Value> {
        let mut d = BTreeMap::new();
        for k in epoch.rounds() {
            for node in 0..n {
                let p = Position::new(node, k);
                let v = if nil.contains(&p) {
                    Value::Nil
                } else {
                    Value::Block(BlockHash([node as u8; 32]))
                };
                d.insert(p, v);
            }
        }
        d
    }

    fn stake(locks: &[(NodeId, u64)]) -> StakeState {
        resolve_weights(locks.iter().copied().collect(), BTreeMap::new())
    }

    #[test]
    fn nil_slashes_one_rth() {
        let e = EpochConfig::new(10, 0).unwrap();
        let s = stake(&[(0, 100), (1, 100)]);
        let out = epoch_close(
            &s,
            &e,
            2,
            &all_decided(2, &e, &[Position::new(1, 4)]),
            &BTreeSet::new(),
            0,
            &[],
        )
        .unwrap();
        assert_eq!(out.slashed, BTreeMap::from([(1, 10)]));
        assert_eq!(out.next.locked[&1], 90);
        assert_eq!(out.payouts[&0].slashing, 10);
    }

    #[test]
    fn slash_remainder_stays_with_node() {
        let e = EpochConfig::new(3, 0).unwrap();
        let s = stake(&[(0, 10), (1, 10)]);
        let out = epoch_close(
            &s,
            &e,
            2,
            &all_decided(2, &e, &[Position::new(1, 0)]),
            &BTreeSet::new(),
            0,
            &[],
        )
        .unwrap();
        assert_eq!(out.slashed[&1], 3);
        assert_eq!(out.next.locked[&1], 7);
    }

    #[test]
    fn equivocator_fully_slashed() {
        let e = EpochConfig::new(10, 0).unwrap();
        let s = stake(&[(0, 100), (1, 50), (2, 100)]);
        let out = epoch_close(
            &s,
            &e,
            3,
            &all_decided(3, &e, &[]),
            &BTreeSet::from([1]),
            0,
            &[],
        )
        .unwrap();
        assert_eq!(out.slashed[&1], 50);
        assert!(!out.next.locked.contains_key(&1));
        let redistributed: u64 = out.payouts.values().map(|p| p.slashing).sum();
        assert_eq!(redistributed, 50);
        assert_eq!(out.payouts.get(&1).map_or(0, |p| p.slashing + p.fees), 0);
    }

    #[test]
    fn fees_split_three_to_one() {
        let e = EpochConfig::new(5, 2).unwrap();
        let s = stake(&[(0, 30), (1, 10)]);
        let out = epoch_close(
            &s,
            &e,
            2,
            &all_decided(2, &e, &[]),
            &BTreeSet::new(),
            1001,
            &[],
        )
        .unwrap();
        // Oracle: floor(1001*3/4) = 750, floor(1001/4) = 250, remainder 1 to node 0.
        assert_eq!(out.payouts[&0].fees, 751);
        assert_eq!(out.payouts[&1].fees, 250);
    }

    #[test]
    fn incomplete_epoch_rejected() {
        let e = EpochConfig::new(2, 0).unwrap();
        let mut d = all_decided(2, &e, &[]);
        d.remove(&Position::new(1, 1));
        assert_eq!(
            epoch_close(&stake(&[(0, 1)]), &e, 2, &d, &BTreeSet::new(), 0, &[]),
            Err(StakeError::IncompleteEpoch(Position::new(1, 1)))
        );
    }

    #[test]
    fn sealed_ops_apply_next_epoch_and_unlock_one_later() {
        let e = EpochConfig::new(2, 0).unwrap();
        let s = stake(&[(0, 10), (1, 10)]);
        let ops = [
            SealedStakeOp {
                account: AccountId(7),
                op: StakeOp::Lock { node: 2, amount: 5 },
            },
            SealedStakeOp {
                account: AccountId(1),
                op: StakeOp::Delegate { node: 1, to: 0 },
            },
            SealedStakeOp {
                account: AccountId(0),
                op: StakeOp::Unlock { node: 0 },
            },
        ];
        let out = epoch_close(
            &s,
            &e,
            3,
            &all_decided(3, &e, &[]),
            &BTreeSet::new(),
            0,
            &ops,
        )
        .unwrap();
        assert_eq!(
            out.next.effective,
            BTreeMap::from([(0, 20), (1, 0), (2, 5)])
        );
        assert!(out.payouts.values().all(|p| p.released == 0));
        let out2 = epoch_close(
            &out.next,
            &e.next(),
            3,
            &all_decided(3, &e.next(), &[]),
            &BTreeSet::new(),
            0,
            &[],
        )
        .unwrap();
        assert_eq!(out2.payouts[&0].released, 10);
        assert_eq!(
            out2.next.effective,
            BTreeMap::from([(0, 10), (1, 0), (2, 5)])
        );
    }

    #[test]
    fn delegated_slash_debits_contributors() {
        let e = EpochConfig::new(4, 0).unwrap();
        let s = resolve_weights(
            BTreeMap::from([(0, 30), (1, 10), (2, 40)]),
            BTreeMap::from([(1, 0)]),
        );
        let nil = [Position::new(0, 0)];
        let out = epoch_close(
            &s,
            &e,
            3,
            &all_decided(3, &e, &nil),
            &BTreeSet::new(),
            0,
            &[],
        )
        .unwrap();
        assert_eq!(out.slashed[&0], 10);
        assert_eq!(out.next.locked[&0] + out.next.locked[&1], 30);
        // 10*30/40 = 7 and 10*10/40 = 2 after flooring; the leftover unit comes from locker 0.
        assert_eq!(out.next.locked[&0], 22);
        assert_eq!(out.next.locked[&1], 8);
        let prev: u64 = s.locked.values().sum();
        let next: u64 = out.next.locked.values().sum();
        let paid: u64 = out.payouts.values().map(|p| p.slashing).sum();
        assert_eq!(next + paid + out.undistributed_slash, prev);
    }
}

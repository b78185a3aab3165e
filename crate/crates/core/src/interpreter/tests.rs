use std::collections::BTreeSet;

use super::*;
use crate::block_dag::{Block, MacScheme, NodeId, Position, Round};
use crate::fixtures::lockstep;
use crate::trb::{MessageKind, QuorumConfig, Value};

fn observe(blocks: &[Block], n: u32) -> ObserverView {
    let scheme = MacScheme::default();
    let mut view = ObserverView::new(
        QuorumConfig::unweighted(n).unwrap(),
        TimeoutPolicy::default(),
    )
    .with_tracing();
    for b in blocks {
        view.insert(b.clone(), &scheme).unwrap();
    }
    view.interpret_all();
    view
}

fn block_at(blocks: &[Block], node: NodeId, round: Round) -> &Block {
    blocks
        .iter()
        .find(|b| b.node == node && b.round == round)
        .unwrap()
}

/// Kinds of messages for `pos` in a block's out buffer.
fn out_kinds(view: &ObserverView, b: &Block, pos: Position) -> Vec<&'static str> {
    view.state(&b.hash())
        .unwrap()
        .out()
        .iter()
        .filter(|m| m.pos == pos)
        .map(|m| match m.kind {
            MessageKind::PrePrepare { .. } => "pp",
            MessageKind::Prepare { .. } => "pr",
            MessageKind::Commit { .. } => "cm",
            MessageKind::ViewChange { .. } => "vc",
            MessageKind::NewView { .. } => "nv",
        })
        .collect()
}

#[test]
fn genesis_has_one_machine() {
    let g = Block::unsigned(0, 0, None, vec![]).sign_with(&MacScheme::default());
    let view = observe(std::slice::from_ref(&g), 4);
    let st = view.state(&g.hash()).unwrap();
    assert_eq!(st.machine_count(), 1);
    let kinds: Vec<_> = st.out().iter().map(|m| m.kind.clone()).collect();
    let v = Value::Block(g.hash());
    assert_eq!(
        kinds,
        vec![
            MessageKind::PrePrepare { view: 0, value: v },
            MessageKind::Prepare { view: 0, value: v }
        ]
    );
}

#[test]
fn empty_dag_decides_nothing() {
    let mut view = ObserverView::new(
        QuorumConfig::unweighted(4).unwrap(),
        TimeoutPolicy::default(),
    );
    assert_eq!(view.interpret_all(), 0);
    assert!(view.decided().is_empty());
}

#[test]
fn steady_state_trace() {
    let blocks = lockstep(4, 8, &BTreeSet::new(), &MacScheme::default());
    let view = observe(&blocks, 4);
    let pos = Position::new(3, 2);
    let owner = block_at(&blocks, 3, 2);
    assert_eq!(out_kinds(&view, owner, pos), ["pp", "pr"]);
    for n in 0..3 {
        assert_eq!(
            out_kinds(&view, block_at(&blocks, n, 3), pos),
            ["pr"],
            "node {n}"
        );
    }
    for n in 0..4 {
        assert_eq!(
            out_kinds(&view, block_at(&blocks, n, 4), pos),
            ["cm"],
            "node {n}"
        );
        let st = view.state(&block_at(&blocks, n, 5).hash()).unwrap();
        assert!(st.decisions().contains(&(pos, Value::Block(owner.hash()))));
    }
    for k in 0..5 {
        for n in 0..4 {
            let d = view.decision(&Position::new(n, k)).unwrap();
            assert_eq!(d.round, k + 3);
            assert_eq!(d.value, Value::Block(block_at(&blocks, n, k).hash()));
        }
        assert!(view.round_decided(k).is_some());
    }
    assert!(view.round_decided(6).is_none());
    assert!(view.conflicts().is_empty());
}

#[test]
fn view_change_trace() {
    let blocks = lockstep(4, 17, &BTreeSet::from([3]), &MacScheme::default());
    let view = observe(&blocks, 4);
    let pos = Position::new(3, 2);
    for n in 0..3 {
        let r2 = view.state(&block_at(&blocks, n, 2).hash()).unwrap();
        assert_eq!(r2.timeout(), 10);
        assert_eq!(r2.pending_timer(&pos), Some(12));
        for k in 3..12 {
            assert!(
                out_kinds(&view, block_at(&blocks, n, k), pos).is_empty(),
                "node {n} round {k}"
            );
        }
        assert_eq!(out_kinds(&view, block_at(&blocks, n, 12), pos), ["vc"]);
        assert_eq!(
            out_kinds(&view, block_at(&blocks, n, 13), pos),
            ["nv", "pr"]
        );
        assert_eq!(out_kinds(&view, block_at(&blocks, n, 14), pos), ["cm"]);
        let r15 = view.state(&block_at(&blocks, n, 15).hash()).unwrap();
        let nil: Vec<_> = r15.decisions().iter().filter(|d| d.0 == pos).collect();
        assert_eq!(nil, [&(pos, Value::Nil)]);
        let r14 = view.state(&block_at(&blocks, n, 14).hash()).unwrap();
        assert!(r14.decisions().iter().all(|d| d.0 != pos));
    }
    assert_eq!(view.decision(&pos).unwrap().round, 15);
    let full = view.round_decided(2).unwrap();
    assert_eq!(full[&3], Value::Nil);
    for n in 0..3 {
        assert_eq!(full[&n], Value::Block(block_at(&blocks, n, 2).hash()));
    }
}

#[test]
fn prefix_then_extension_matches_full() {
    let scheme = MacScheme::default();
    let blocks = lockstep(4, 9, &BTreeSet::new(), &scheme);
    let full = observe(&blocks, 4);
    let mut inc = ObserverView::new(
        QuorumConfig::unweighted(4).unwrap(),
        TimeoutPolicy::default(),
    )
    .with_tracing();
    for chunk in blocks.chunks(5) {
        for b in chunk {
            inc.insert(b.clone(), &scheme).unwrap();
        }
        inc.interpret_all();
    }
    assert_eq!(inc.report(), full.report());
}

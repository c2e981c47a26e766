use super::*;
use crate::identity::new_identity;
use rand::RngCore;

fn params(k: usize, theta: f64) -> ProtocolParams {
    ProtocolParams { k, theta, ..ProtocolParams::default() }
}

fn node(seed: u64, p: ProtocolParams) -> PeeringState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let id = new_identity(&mut rng);
    PeeringState::new(id, p, rng).unwrap()
}

/// Searches for a fresh requester whose inbound score at `target` lies in
/// `[lo, hi)` and who passes `target`'s θ-test.
fn requester_in(target: &PeeringState, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> PeeringState {
    loop {
        let r = PeeringState::new(new_identity(rng), target.params, ChaCha8Rng::seed_from_u64(rng.next_u64())).unwrap();
        let s = inbound_score(&target.id(), &r.id(), &target.private_salt()).unwrap().value();
        let out = outbound_score(&r.id(), &target.id(), &r.public_salt()).unwrap();
        if s >= lo && s < hi && theta_test(out, target.params.theta) {
            return r;
        }
    }
}

fn request(target: &mut PeeringState, from: &mut PeeringState, now: Tick) -> RequestDecision {
    let msg = from.build_request(target.id());
    let MessageBody::Request(req) = msg.body else { unreachable!() };
    target.handle_request(now, msg.from, &req).unwrap()
}

#[test]
fn first_target_is_argmin() {
    let mut a = node(1, params(4, 1.0));
    let peers: Vec<NodeId> = (10..20).map(|s| node(s, params(4, 1.0)).id()).collect();
    a.learn_peers(&peers);
    let best = a.ranked_candidates()[0];
    assert!(a.ranked_candidates().iter().all(|(_, s)| *s >= best.1));
    assert_eq!(a.next_outbound_target(), Some((best.0, false)));
    assert!(a.ranked_candidates().iter().all(|(p, _)| *p != a.id()));
}

#[test]
fn saturated_without_salt_update_yields_nothing() {
    let mut a = node(1, params(2, 1.0));
    let peers: Vec<NodeId> = (10..20).map(|s| node(s, params(2, 1.0)).id()).collect();
    a.learn_peers(&peers);
    for t in 0..2 {
        let msg = a.poll_query(t).unwrap();
        assert!(a.poll_query(t).is_none(), "one request in flight at a time");
        assert!(a.handle_response(t, msg.to, true).is_none());
    }
    assert_eq!(a.outbound().len(), 2);
    assert_eq!(a.next_outbound_target(), None);
    assert!(a.poll_query(3).is_none());
}

#[test]
fn replacement_targets_best_candidate_below_worst() {
    let mut a = node(2, params(3, 1.0));
    let peers: Vec<NodeId> = (100..160).map(|s| node(s, params(3, 1.0)).id()).collect();
    a.learn_peers(&peers);
    for t in 0..3 {
        let msg = a.poll_query(t).unwrap();
        a.handle_response(t, msg.to, true);
    }
    a.update_public_salt();
    assert_eq!(a.outbound().len(), 3, "salt update keeps existing neighbors");
    a.check_invariants().unwrap();
    let worst = a.outbound().iter().map(|e| e.score).max().unwrap();
    let expected = a
        .ranked_candidates()
        .iter()
        .find(|(p, s)| *s < worst && !a.is_neighbor(p))
        .map(|(p, _)| (*p, true));
    assert!(expected.is_some(), "60 candidates leave room for improvement");
    assert_eq!(a.next_outbound_target(), expected);

    // Accepting the replacement keeps |outbound| and evicts the old worst.
    let old_worst = a.outbound().iter().max_by_key(|e| (e.score, e.peer)).unwrap().peer;
    let msg = a.poll_query(10).unwrap();
    let drop = a.handle_response(11, msg.to, true).unwrap();
    assert_eq!(drop, Message::drop(a.id(), old_worst));
    assert_eq!(a.outbound().len(), 3);
    assert!(a.outbound().iter().all(|e| e.score < worst || e.peer == msg.to));
    // the set is filled again, so seeking waits for the next public salt
    assert!(!a.is_seeking_replacement());
    assert_eq!(a.next_outbound_target(), None);
}

#[test]
fn replacement_seeking_stops_when_nothing_is_better() {
    let mut a = node(3, params(1, 1.0));
    let b = node(4, params(1, 1.0));
    a.learn_peers(&[b.id()]);
    let msg = a.poll_query(0).unwrap();
    a.handle_response(0, msg.to, true);
    a.update_public_salt();
    assert!(a.is_seeking_replacement());
    assert!(a.poll_query(1).is_none());
    assert!(!a.is_seeking_replacement());
}

#[test]
fn accepts_while_below_capacity() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut t = node(5, params(4, 1.0));
    for i in 0..3 {
        let mut r = requester_in(&t, 0.0, 1.0, &mut rng);
        let d = request(&mut t, &mut r, i);
        assert_eq!(d.outcome, RequestOutcome::Accepted { evicted: None });
        assert!(d.drop.is_none());
    }
    let mut r = requester_in(&t, 0.0, 1.0, &mut rng);
    let d = request(&mut t, &mut r, 3);
    assert_eq!(d.outcome, RequestOutcome::Accepted { evicted: None });
    assert_eq!(d.response, Message::response(t.id(), r.id(), true));
    assert_eq!(t.inbound().len(), 4);
}

#[test]
fn full_inbound_evicts_highest_score() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut t = node(6, params(4, 1.0));
    let bands = [(0.09, 0.11), (0.19, 0.21), (0.29, 0.31), (0.89, 0.91)];
    let mut worst_peer = None;
    for (i, (lo, hi)) in bands.into_iter().enumerate() {
        let mut r = requester_in(&t, lo, hi, &mut rng);
        assert!(request(&mut t, &mut r, i as Tick).outcome.accepted());
        worst_peer = Some(r.id());
    }
    let mut newcomer = requester_in(&t, 0.24, 0.26, &mut rng);
    let d = request(&mut t, &mut newcomer, 10);
    assert_eq!(d.outcome, RequestOutcome::Accepted { evicted: worst_peer });
    assert_eq!(d.drop, Some(Message::drop(t.id(), worst_peer.unwrap())));
    assert_eq!(t.inbound().len(), 4);
    let max = t.inbound().iter().map(|e| e.score.value()).fold(0.0, f64::max);
    assert!(max < 0.31);

    let mut loser = requester_in(&t, 0.5, 0.6, &mut rng);
    let d = request(&mut t, &mut loser, 11);
    assert_eq!(d.outcome, RequestOutcome::Rejected(RejectReason::NotBetter));
    assert!(d.drop.is_none());
}

#[test]
fn theta_test_gates_requests() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut t = node(7, params(4, 0.1));
    // find a requester whose outbound score toward t is around 0.8
    let mut r = loop {
        let r = PeeringState::new(new_identity(&mut rng), t.params, ChaCha8Rng::seed_from_u64(rng.next_u64())).unwrap();
        let s = outbound_score(&r.id(), &t.id(), &r.public_salt()).unwrap().value();
        if (0.75..0.85).contains(&s) {
            break r;
        }
    };
    let d = request(&mut t, &mut r, 0);
    assert_eq!(d.outcome, RequestOutcome::Rejected(RejectReason::Theta));
    assert!(!d.outcome.eligible());
    assert_eq!(t.counters().rejected_theta, 1);
    assert!(t.inbound().is_empty());
}

#[test]
fn duplicate_and_cross_requests_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut t = node(8, params(4, 1.0));
    let mut r = requester_in(&t, 0.0, 1.0, &mut rng);
    assert!(request(&mut t, &mut r, 0).outcome.accepted());
    let again = request(&mut t, &mut r, 1);
    assert_eq!(again.outcome, RequestOutcome::Rejected(RejectReason::AlreadyNeighbor));

    let mut other = requester_in(&t, 0.0, 1.0, &mut rng);
    t.learn_peers(&[other.id()]);
    // t has a request in flight to `other`; `other` asks t concurrently
    t.pending = Some(Pending { target: other.id(), replacement: false, sent_at: 2 });
    let cross = request(&mut t, &mut other, 2);
    assert_eq!(cross.outcome, RequestOutcome::Rejected(RejectReason::CrossRequest));
}

#[test]
fn salt_verification_across_updates() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut t = node(9, params(1, 1.0));
    let mut r = requester_in(&t, 0.0, 1.0, &mut rng);
    // first contact: trust on first use
    let first = r.build_request(t.id());
    let MessageBody::Request(req) = first.body else { unreachable!() };
    assert_eq!(req.updates_since_last, 0);
    t.handle_request(0, r.id(), &req).unwrap();
    assert_eq!(t.last_known_salt(&r.id()), Some(r.public_salt()));

    r.update_public_salt();
    r.update_public_salt();
    let msg = r.build_request(t.id());
    let MessageBody::Request(req) = msg.body else { unreachable!() };
    assert_eq!(req.updates_since_last, 2);
    let d = t.handle_request(5, r.id(), &req).unwrap();
    assert!(d.outcome.eligible(), "honest advance verifies");

    // claiming the wrong count fails
    r.update_public_salt();
    let msg = r.build_request(t.id());
    let MessageBody::Request(mut req) = msg.body else { unreachable!() };
    req.updates_since_last = 2;
    let d = t.handle_request(6, r.id(), &req).unwrap();
    assert_eq!(d.outcome, RequestOutcome::Rejected(RejectReason::Verification));

    // a forged salt fails
    let forged = PeeringRequest { public_salt: Salt::public([0x5a; 32]), updates_since_last: 1, new_chain: false };
    let d = t.handle_request(7, r.id(), &forged).unwrap();
    assert_eq!(d.outcome, RequestOutcome::Rejected(RejectReason::Verification));

    let too_many = PeeringRequest { updates_since_last: t.params.max_verify_steps + 1, ..forged };
    let d = t.handle_request(8, r.id(), &too_many).unwrap();
    assert_eq!(d.outcome, RequestOutcome::Rejected(RejectReason::VerificationRefused));
}

#[test]
fn exhausted_chain_is_reprovisioned() {
    let p = ProtocolParams { chain_length: 3, ..params(2, 1.0) };
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut t = node(13, p);
    let mut r = requester_in(&t, 0.0, 1.0, &mut rng);
    request(&mut t, &mut r, 0);
    let before = r.public_salt();
    r.update_public_salt();
    r.update_public_salt();
    r.update_public_salt(); // chain of 3 exhausted here
    assert_eq!(r.counters().chain_reprovisions, 1);
    assert_ne!(r.public_salt(), before);
    let msg = r.build_request(t.id());
    let MessageBody::Request(req) = msg.body else { unreachable!() };
    assert!(req.new_chain);
    assert!(t.handle_request(1, r.id(), &req).unwrap().outcome.eligible());
    assert_eq!(t.last_known_salt(&r.id()), Some(r.public_salt()));
}

#[test]
fn malformed_requests_error() {
    let mut t = node(14, params(2, 1.0));
    let req = PeeringRequest { public_salt: Salt::private([1; 32]), updates_since_last: 0, new_chain: false };
    let other = NodeId::from_bytes([1; 32]);
    assert!(matches!(t.handle_request(0, other, &req), Err(ProtocolError::Malformed(_))));
    let ok = PeeringRequest { public_salt: Salt::public([1; 32]), ..req };
    assert!(matches!(t.handle_request(0, t.id(), &ok), Err(ProtocolError::Malformed(_))));
    let misaddressed = Message::drop(other, NodeId::from_bytes([2; 32]));
    assert!(t.handle_message(0, &misaddressed).is_err());
}

#[test]
fn responses_update_outbound_set() {
    let mut a = node(15, params(4, 1.0));
    let peers: Vec<NodeId> = (30..40).map(|s| node(s, params(4, 1.0)).id()).collect();
    a.learn_peers(&peers);
    for t in 0..3 {
        let m = a.poll_query(t).unwrap();
        a.handle_response(t, m.to, true);
    }
    assert_eq!(a.outbound().len(), 3);
    let m = a.poll_query(3).unwrap();
    assert_eq!(a.handle_response(3, m.to, true), None);
    assert_eq!(a.outbound().len(), 4);

    // reject advances past the candidate
    let mut b = node(16, params(4, 1.0));
    b.learn_peers(&peers);
    let m = b.poll_query(0).unwrap();
    b.handle_response(1, m.to, false);
    assert_eq!(b.rejected_this_epoch(), 1);
    assert!(b.was_rejected(&m.to));
    let next = b.poll_query(2).unwrap();
    assert_ne!(next.to, m.to);

    // unmatched response
    b.handle_response(3, m.to, true);
    assert_eq!(b.counters().unmatched_responses, 1);
    assert!(!b.outbound().iter().any(|e| e.peer == m.to));

    // a new epoch forgets rejections
    b.update_public_salt();
    assert_eq!(b.rejected_this_epoch(), 0);
}

#[test]
fn drops_remove_neighbors() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut a = node(18, params(2, 1.0));
    let peers: Vec<NodeId> = (50..55).map(|s| node(s, params(2, 1.0)).id()).collect();
    a.learn_peers(&peers);
    let m = a.poll_query(0).unwrap();
    a.handle_response(0, m.to, true);
    assert_eq!(a.handle_drop(m.to), Some(Direction::Outbound));
    assert!(a.outbound().is_empty());
    assert!(a.was_rejected(&m.to), "an evicting peer is not asked again this epoch");
    let next = a.poll_query(1).expect("requesting resumes");
    assert_ne!(next.to, m.to);
    a.handle_response(1, next.to, false);

    let mut r = requester_in(&a, 0.0, 1.0, &mut rng);
    request(&mut a, &mut r, 2);
    assert_eq!(a.inbound().len(), 1);
    assert_eq!(a.handle_drop(r.id()), Some(Direction::Inbound));
    assert!(a.inbound().is_empty());

    assert_eq!(a.handle_drop(NodeId::from_bytes([0xee; 32])), None);
    assert_eq!(a.counters().stray_drops, 1);
}

#[test]
fn private_salt_update_rescoring() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let mut t = node(20, params(4, 1.0));
    for i in 0..4 {
        let mut r = requester_in(&t, 0.0, 1.0, &mut rng);
        request(&mut t, &mut r, i);
    }
    let old = t.private_salt();
    t.update_private_salt();
    assert_ne!(old, t.private_salt());
    assert_eq!(t.inbound().len(), 4);
    t.check_invariants().unwrap();

    let worst_after = *t.inbound().iter().max_by_key(|e| (e.score, e.peer)).unwrap();
    let mut better = requester_in(&t, 0.0, worst_after.score.value(), &mut rng);
    let d = request(&mut t, &mut better, 9);
    assert_eq!(d.outcome, RequestOutcome::Accepted { evicted: Some(worst_after.peer) });
}

#[test]
fn worst_inbound_changes_with_private_salt() {
    // Over many independent trials the worst neighbor under a new salt is a
    // different peer roughly (k-1)/k of the time.
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut changed = 0;
    let trials = 200;
    for s in 0..trials {
        let mut t = node(1000 + s, params(4, 1.0));
        for i in 0..4 {
            let mut r = requester_in(&t, 0.0, 1.0, &mut rng);
            request(&mut t, &mut r, i);
        }
        let before = t.inbound().iter().max_by_key(|e| (e.score, e.peer)).unwrap().peer;
        t.update_private_salt();
        let after = t.inbound().iter().max_by_key(|e| (e.score, e.peer)).unwrap().peer;
        changed += u32::from(before != after);
    }
    let frac = f64::from(changed) / trials as f64;
    assert!((0.6..0.9).contains(&frac), "changed fraction {frac}");
}

#[test]
fn public_salt_update_rescores_outbound() {
    let mut a = node(22, params(2, 1.0));
    let peers: Vec<NodeId> = (60..70).map(|s| node(s, params(2, 1.0)).id()).collect();
    a.learn_peers(&peers);
    for t in 0..2 {
        let m = a.poll_query(t).unwrap();
        a.handle_response(t, m.to, true);
    }
    let before: Vec<Score> = a.outbound().iter().map(|e| e.score).collect();
    a.update_public_salt();
    let after: Vec<Score> = a.outbound().iter().map(|e| e.score).collect();
    assert_eq!(a.outbound().len(), 2);
    assert_ne!(before, after);
    a.check_invariants().unwrap();
}

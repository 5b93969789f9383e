use proptest::prelude::*;

use super::*;

fn approve(ledger: &mut Ledger, asset: &str, agent: &str, role: Role) {
    ledger.record_approval(ApprovalEntry {
        action: ApprovalAction::RequestApproved,
        subject: asset.into(),
        agent_id: agent.into(),
        role,
        amount: None,
        note: String::new(),
    });
}

fn approve_all(ledger: &mut Ledger, asset: &str) {
    approve(ledger, asset, "ver-1", Role::Verification);
    approve(ledger, asset, "val-1", Role::Valuation);
    approve(ledger, asset, "comp-1", Role::Compliance);
}

fn mint_req(asset: &str, token: &str, supply: u64, cap_bp: u32) -> MintRequest {
    MintRequest {
        asset_id: asset.into(),
        token_id: token.into(),
        total_supply: supply,
        owner: "alice".into(),
        restrictions: Restrictions {
            whitelist_required: true,
            accredited_only: true,
            max_holding_bp: cap_bp,
        },
        metadata_hash: "docs".into(),
        issue_price: 4655,
    }
}

/// OFFICE_X minted to Alice with Bob and Carol whitelisted.
fn office_x() -> (Ledger, Capabilities) {
    let (mut ledger, caps) = Ledger::new(GovernanceParams::default()).unwrap();
    approve_all(&mut ledger, "bldg");
    ledger.mint_tokens(mint_req("bldg", "OFFICE_X", 100_000, 2000)).unwrap();
    for who in ["bob", "carol"] {
        ledger
            .update_whitelist(&caps.compliance, &"OFFICE_X".into(), &who.into(), WhitelistOp::Add)
            .unwrap();
    }
    (ledger, caps)
}

fn order(from: &str, to: &str, amount: u64) -> TransferOrder {
    TransferOrder {
        token_id: "OFFICE_X".into(),
        from: from.into(),
        to: to.into(),
        amount,
        price: 4655,
        via_agent: None,
    }
}

#[test]
fn genesis_event_chains_from_zero() {
    let (mut ledger, _) = Ledger::new(GovernanceParams::default()).unwrap();
    assert_eq!(ledger.head(), Digest::ZERO);
    approve(&mut ledger, "a", "v", Role::Verification);
    let ev = &ledger.events()[0];
    assert_eq!(ev.seq, 0);
    let expect = chain_hash(&Digest::ZERO, 0, 0, "ApprovalRecord", &ev.body.payload_value());
    assert_eq!(ev.hash, expect);
}

#[test]
fn identical_payloads_get_distinct_hashes() {
    let (mut ledger, _) = Ledger::new(GovernanceParams::default()).unwrap();
    approve(&mut ledger, "a", "v", Role::Verification);
    approve(&mut ledger, "a", "v", Role::Verification);
    let evs = ledger.events();
    assert_eq!((evs[0].seq, evs[1].seq), (0, 1));
    assert_ne!(evs[0].hash, evs[1].hash);
}

#[test]
fn mint_gives_owner_whole_supply() {
    let (ledger, _) = office_x();
    let class = ledger.token(&"OFFICE_X".into()).unwrap();
    assert_eq!(class.balance(&"alice".into()), 100_000);
    assert!(class.is_whitelisted(&"alice".into()));
    assert_eq!(class.holding_cap(), 20_000);
    class.check_invariants().unwrap();
    assert_eq!(ledger.events().iter().filter(|e| e.kind() == EventKind::Mint).count(), 1);
}

#[test]
fn second_mint_is_double_tokenization() {
    let (mut ledger, _) = office_x();
    let err = ledger.mint_tokens(mint_req("bldg", "OFFICE_Y", 10, 2000)).unwrap_err();
    assert_eq!(err, LedgerError::DoubleTokenization("bldg".into()));
}

#[test]
fn mint_requires_full_approval_set() {
    let (mut ledger, _) = Ledger::new(GovernanceParams::default()).unwrap();
    approve(&mut ledger, "bldg", "ver-1", Role::Verification);
    approve(&mut ledger, "bldg", "val-1", Role::Valuation);
    let err = ledger.mint_tokens(mint_req("bldg", "OFFICE_X", 100, 2000)).unwrap_err();
    assert_eq!(err, LedgerError::NotApproved("bldg".into()));

    // A rejection sticks even if a compliance approval shows up later.
    ledger.record_approval(ApprovalEntry {
        action: ApprovalAction::RequestRejected,
        subject: "bldg".into(),
        agent_id: "comp-1".into(),
        role: Role::Compliance,
        amount: None,
        note: "aml".into(),
    });
    approve(&mut ledger, "bldg", "comp-1", Role::Compliance);
    assert!(ledger.mint_tokens(mint_req("bldg", "OFFICE_X", 100, 2000)).is_err());
}

#[test]
fn transfer_examples() {
    let (mut ledger, caps) = office_x();
    assert_eq!(ledger.execute_transfer(order("alice", "bob", 10_000)), TransferOutcome::Accepted);
    // 25000 > floor(100000 × 2000 / 10000) = 20000
    assert_eq!(
        ledger.execute_transfer(order("alice", "carol", 25_000)),
        TransferOutcome::Rejected(RejectReason::ExceedsHoldingCap)
    );
    assert_eq!(
        ledger.execute_transfer(order("alice", "dave", 1)),
        TransferOutcome::Rejected(RejectReason::NotWhitelisted)
    );
    assert_eq!(
        ledger.execute_transfer(order("bob", "carol", 10_001)),
        TransferOutcome::Rejected(RejectReason::InsufficientBalance)
    );

    ledger.set_frozen(&caps.governance, &"OFFICE_X".into(), true, "manipulation").unwrap();
    assert_eq!(
        ledger.execute_transfer(order("alice", "bob", 1)),
        TransferOutcome::Rejected(RejectReason::Frozen)
    );
    ledger.set_frozen(&caps.governance, &"OFFICE_X".into(), false, "cleared").unwrap();
    assert!(ledger.execute_transfer(order("alice", "bob", 1)).is_accepted());

    let mut unknown = order("alice", "bob", 1);
    unknown.token_id = "NOPE".into();
    assert_eq!(
        ledger.execute_transfer(unknown),
        TransferOutcome::Rejected(RejectReason::UnknownToken)
    );

    let class = ledger.token(&"OFFICE_X".into()).unwrap();
    assert_eq!(class.balance(&"bob".into()), 10_001);
    class.check_invariants().unwrap();
    let rejected = ledger.events().iter().filter(|e| e.kind() == EventKind::TransferRejected);
    assert_eq!(rejected.count(), 5);
}

#[test]
fn cap_boundary_is_inclusive() {
    let (mut ledger, _) = office_x();
    assert!(ledger.execute_transfer(order("alice", "bob", 20_000)).is_accepted());
    assert_eq!(
        ledger.execute_transfer(order("alice", "bob", 1)),
        TransferOutcome::Rejected(RejectReason::ExceedsHoldingCap)
    );
}

#[test]
fn full_cap_lets_anyone_hold_everything() {
    let (mut ledger, caps) = Ledger::new(GovernanceParams::default()).unwrap();
    approve_all(&mut ledger, "bldg");
    ledger.mint_tokens(mint_req("bldg", "OFFICE_X", 100, 10_000)).unwrap();
    ledger
        .update_whitelist(&caps.compliance, &"OFFICE_X".into(), &"bob".into(), WhitelistOp::Add)
        .unwrap();
    assert!(ledger.execute_transfer(order("alice", "bob", 100)).is_accepted());
}

#[test]
fn freeze_is_idempotent_and_unknown_token_errors() {
    let (mut ledger, caps) = office_x();
    let tok: TokenId = "OFFICE_X".into();
    assert!(ledger.set_frozen(&caps.governance, &tok, true, "x").unwrap().is_some());
    let before = ledger.events().len();
    assert!(ledger.set_frozen(&caps.governance, &tok, true, "x").unwrap().is_none());
    assert_eq!(ledger.events().len(), before);
    let err = ledger.set_frozen(&caps.governance, &"GHOST".into(), true, "x").unwrap_err();
    assert_eq!(err, LedgerError::UnknownToken("GHOST".into()));
}

#[test]
fn whitelist_removal_rules() {
    let (mut ledger, caps) = office_x();
    let tok: TokenId = "OFFICE_X".into();
    ledger.execute_transfer(order("alice", "bob", 10_000));
    let err = ledger
        .update_whitelist(&caps.compliance, &tok, &"bob".into(), WhitelistOp::Remove)
        .unwrap_err();
    assert!(matches!(err, LedgerError::HoldingsNonZero { amount: 10_000, .. }));

    assert_eq!(
        ledger.update_whitelist(&caps.compliance, &tok, &"bob".into(), WhitelistOp::Blacklist),
        Err(LedgerError::Unauthorized)
    );
    ledger.update_whitelist(&caps.governance, &tok, &"bob".into(), WhitelistOp::Blacklist).unwrap();
    assert_eq!(
        ledger.execute_transfer(order("bob", "carol", 1)),
        TransferOutcome::Rejected(RejectReason::NotWhitelisted)
    );
    assert_eq!(
        ledger.update_whitelist(&caps.compliance, &tok, &"bob".into(), WhitelistOp::Add),
        Err(LedgerError::Blacklisted("bob".into()))
    );
    ledger.token(&tok).unwrap().check_invariants().unwrap();

    // Carol holds nothing, so plain removal is fine.
    ledger.update_whitelist(&caps.compliance, &tok, &"carol".into(), WhitelistOp::Remove).unwrap();
    assert!(!ledger.token(&tok).unwrap().is_whitelisted(&"carol".into()));
}

#[test]
fn incident_records_are_never_deduplicated() {
    let (mut ledger, caps) = office_x();
    let entry = IncidentEntry {
        incident_id: 7,
        classification: "MarketManipulation".into(),
        subject: "OFFICE_X".into(),
        source_reports: vec![],
        responsible_agents: vec![],
        actions: vec!["FreezeToken(OFFICE_X)".into()],
    };
    let a = ledger.record_incident(&caps.governance, entry.clone());
    let b = ledger.record_incident(&caps.governance, entry);
    assert_ne!(a.seq, b.seq);
    assert_eq!(a.body, b.body);
}

#[test]
fn staged_params_apply_next_tick() {
    let (mut ledger, caps) = Ledger::new(GovernanceParams::default()).unwrap();
    ledger.begin_tick(3);
    ledger.stage_param_change(&caps.governance, &ParamUpdate::VerificationQuorum(2)).unwrap();
    assert_eq!(ledger.params().verification_quorum, 1);
    ledger.begin_tick(3);
    assert_eq!(ledger.params().verification_quorum, 1);
    ledger.begin_tick(4);
    assert_eq!(ledger.params().verification_quorum, 2);

    let err = ledger.stage_param_change(&caps.governance, &ParamUpdate::TrustThreshold(1.2));
    assert!(matches!(err, Err(LedgerError::Param(_))));
}

#[test]
fn export_roundtrips_through_verify() {
    let (mut ledger, _) = office_x();
    ledger.execute_transfer(order("alice", "bob", 10_000));
    let mut buf = Vec::new();
    ledger.export_ndjson(&mut buf).unwrap();
    let report = verify_export(&buf[..]).unwrap();
    assert!(report.is_ok());
    assert_eq!(report.head, ledger.head());
    assert_eq!(report.verified, ledger.events().len() as u64);

    // Typed events deserialize back unchanged.
    let first = buf.split(|&b| b == b'\n').nth(2).unwrap();
    let ev: LedgerEvent = serde_json::from_slice(first).unwrap();
    assert_eq!(&ev, &ledger.events()[2]);
}

#[test]
fn in_memory_tamper_is_detected() {
    let (mut ledger, _) = office_x();
    ledger.execute_transfer(order("alice", "bob", 10_000));
    assert!(ledger.verify_chain().is_ok());
    let last = ledger.events().len() - 1;
    if let EventBody::Transfer(t) = &mut ledger.events_mut_for_test()[last].body {
        t.amount = 1;
    }
    assert_eq!(ledger.verify_chain(), Err(last as u64));
}

#[test]
fn truncated_and_tampered_exports() {
    let (mut ledger, _) = office_x();
    ledger.execute_transfer(order("alice", "bob", 10_000));
    let mut buf = Vec::new();
    ledger.export_ndjson(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();

    // Clean truncation at a line boundary.
    let head: String = lines[..3].iter().map(|l| format!("{l}\n")).collect();
    let r = verify_export(head.as_bytes()).unwrap();
    assert!(r.is_ok());
    assert_eq!(r.verified, 3);
    assert_eq!(r.head, ledger.events()[2].hash);

    // Cut mid-record.
    let cut = &text[..text.len() - 20];
    let r = verify_export(cut.as_bytes()).unwrap();
    assert!(r.is_ok() && r.truncated_tail);
    assert_eq!(r.verified, lines.len() as u64 - 1);

    // Edit one payload character in line 3.
    let tampered = text.replacen("\"bob\"", "\"bOb\"", 1);
    let seq = lines.iter().position(|l| l.contains("\"bob\"")).unwrap() as u64;
    let r = verify_export(tampered.as_bytes()).unwrap();
    assert!(matches!(r.status, VerifyStatus::Mismatch { seq: s, .. } if s == seq));

    assert!(matches!(verify_export(&b""[..]), Err(ExportError::Empty)));
}

#[derive(Debug, Clone)]
enum Op {
    Transfer { from: usize, to: usize, amount: u64 },
    Freeze(bool),
    Whitelist { who: usize, op: u8 },
}

const ADDRS: [&str; 5] = ["alice", "bob", "carol", "dave", "eve"];

fn op_strategy() -> impl Strategy<Value = Op> {
    prop_oneof![
        6 => (0..5usize, 0..5usize, 0..30_000u64)
            .prop_map(|(from, to, amount)| Op::Transfer { from, to, amount }),
        1 => any::<bool>().prop_map(Op::Freeze),
        2 => (0..5usize, 0..3u8).prop_map(|(who, op)| Op::Whitelist { who, op }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn restriction_invariants_hold(ops in prop::collection::vec(op_strategy(), 1..60)) {
        let (mut ledger, caps) = office_x();
        let tok: TokenId = "OFFICE_X".into();
        for op in ops {
            match op {
                Op::Transfer { from, to, amount } => {
                    let before = ledger.token(&tok).unwrap().clone();
                    let out = ledger.execute_transfer(order(ADDRS[from], ADDRS[to], amount));
                    if !out.is_accepted() {
                        prop_assert_eq!(&before, ledger.token(&tok).unwrap());
                        prop_assert_eq!(ledger.events().last().unwrap().kind(), EventKind::TransferRejected);
                    }
                }
                Op::Freeze(f) => { ledger.set_frozen(&caps.governance, &tok, f, "p").unwrap(); }
                Op::Whitelist { who, op } => {
                    let addr: Address = ADDRS[who].into();
                    let _ = match op {
                        0 => ledger.update_whitelist(&caps.compliance, &tok, &addr, WhitelistOp::Add),
                        1 => ledger.update_whitelist(&caps.compliance, &tok, &addr, WhitelistOp::Remove),
                        _ => ledger.update_whitelist(&caps.governance, &tok, &addr, WhitelistOp::Blacklist),
                    };
                }
            }
            let class = ledger.token(&tok).unwrap();
            prop_assert!(class.check_invariants().is_ok(), "{:?}", class.check_invariants());
        }
        // Between a Freeze and the next Unfreeze no Transfer appears.
        let mut frozen = false;
        for ev in ledger.events() {
            match ev.kind() {
                EventKind::Freeze => frozen = true,
                EventKind::Unfreeze => frozen = false,
                EventKind::Transfer => prop_assert!(!frozen),
                _ => {}
            }
        }
        prop_assert!(ledger.verify_chain().is_ok());
    }
}

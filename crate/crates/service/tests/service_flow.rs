mod common;

use std::collections::{BTreeMap, BTreeSet};

use chrono::Duration;
use common::*;
use sevscale::model::{LabelViolation, Phase, Pool};
use sevscale::scoring::JudgmentError;
use sevscale::{verify_design, AnnotatorId, ItemId, SubjectMatterLabel};
use sevscale_service::{Answer, ExposureScope, ServiceError, TaskPayload};

#[test]
fn fresh_subject_matter_phase_has_zero_progress() {
    let f = fixture(&[("women", 4), ("muslims", 4)]);
    f.service.open_phase(&f.campaign, Phase::SubjectMatter).unwrap();
    let status = f.service.status(&f.campaign).unwrap();
    assert_eq!(status.phase, Some(Phase::SubjectMatter));
    assert_eq!(status.subject_matter.items_total, 8);
    assert_eq!(status.subject_matter.items_complete, 0);
    assert_eq!(status.subject_matter.labelings_collected, 0);
    assert_eq!(status.subject_matter.labelings_required, 24);
    assert!(status.severity.is_empty());
    assert!(!status.severity_complete);
}

#[test]
fn phases_open_only_in_order() {
    let f = fixture(&[("women", 4)]);
    for phase in [Phase::Severity, Phase::Closed] {
        assert!(matches!(
            f.service.open_phase(&f.campaign, phase),
            Err(ServiceError::PhaseOrderViolation(_))
        ));
    }
    f.service.open_phase(&f.campaign, Phase::SubjectMatter).unwrap();
    assert!(matches!(
        f.service.open_phase(&f.campaign, Phase::SubjectMatter),
        Err(ServiceError::PhaseOrderViolation(_))
    ));
}

#[test]
fn severity_waits_for_the_last_unlabeled_item() {
    let f = fixture(&[("women", 5), ("muslims", 5)]);
    f.service.open_phase(&f.campaign, Phase::SubjectMatter).unwrap();
    let last = ItemId::from("muslims-04");
    // Everyone answers every item except the last one gets only two labels.
    let mut skipped_once = BTreeSet::new();
    loop {
        let mut progressed = false;
        for a in &f.annotators {
            let Ok(task) = f.service.next_task(&f.campaign, a) else { continue };
            let TaskPayload::SubjectMatter { item, .. } = &task.payload else { unreachable!() };
            let labeled = f.service.status(&f.campaign).unwrap().subject_matter.labelings_collected;
            if item.item_id == last && skipped_once.len() < 3 && labeled > 0 {
                let collected = count_labels(&f, &last);
                if collected == 2 {
                    f.service.release(&f.campaign, a, &task.assignment_id).unwrap();
                    skipped_once.insert(a.clone());
                    progressed = true;
                    continue;
                }
            }
            f.service
                .submit(&f.campaign, a, &task.assignment_id, f.answer(&task.payload))
                .unwrap();
            progressed = true;
        }
        if !progressed {
            break;
        }
    }
    assert_eq!(count_labels(&f, &last), 2);
    let status = f.service.status(&f.campaign).unwrap();
    assert_eq!(status.subject_matter.items_complete, 9);
    let err = f.service.open_phase(&f.campaign, Phase::Severity).unwrap_err();
    assert!(matches!(err, ServiceError::PhaseOrderViolation(ref m) if m.contains("muslims-04")), "{err}");
}

fn count_labels(f: &Fixture, item: &ItemId) -> usize {
    f.service
        .snapshot(&f.campaign)
        .unwrap()
        .labelings
        .iter()
        .filter(|l| &l.item_id == item)
        .count()
}

#[test]
fn two_pool_campaign_gets_one_valid_design_per_pool() {
    let f = fixture(&[("women", 8), ("muslims", 8)]);
    f.label_everything();
    let phase = f.service.open_phase(&f.campaign, Phase::Severity).unwrap();
    assert_eq!(phase.designs.len(), 2);
    let snap = f.service.snapshot(&f.campaign).unwrap();
    assert_eq!(snap.pools.len(), 2);
    for p in &snap.pools {
        let verdict = verify_design(&p.design);
        assert!(verdict.is_valid(), "{}: {:?}", p.pool, verdict.violations);
        assert_eq!(p.design.item_count, 8);
        assert_eq!(p.design.tuple_count, 16);
        let Pool::Group(g) = &p.pool else { panic!("unexpected general pool") };
        assert!(p.design.items.iter().all(|i| i.as_str().starts_with(g.as_str())));
    }
}

#[test]
fn severity_status_counts_required_and_collected_judgments() {
    let f = fixture(&[("women", 10)]);
    f.label_everything();
    f.service.open_phase(&f.campaign, Phase::Severity).unwrap();
    let status = f.service.status(&f.campaign).unwrap();
    assert_eq!(status.severity.len(), 1);
    let women = &status.severity[0];
    assert_eq!(women.tuples_total, 20);
    assert_eq!(women.judgments_required, 60);
    assert_eq!(women.judgments_collected, 0);
    assert!(!status.severity_complete);

    let stored = f.drain();
    assert_eq!(stored, 60);
    let status = f.service.status(&f.campaign).unwrap();
    assert_eq!(status.severity[0].judgments_collected, 60);
    assert_eq!(status.severity[0].tuples_complete, 20);
    assert!(status.severity_complete);
    assert_eq!(status, f.service.recount_status(&f.campaign).unwrap());

    // No tuple is handed out again once it has all of its judgments.
    for a in &f.annotators {
        assert_eq!(f.service.next_task(&f.campaign, a).unwrap_err(), ServiceError::NoTaskAvailable);
    }
}

#[test]
fn assignments_respect_pools_and_never_include_unadjudicated_items() {
    let f = fixture(&[("women", 8), ("muslims", 8), ("other", 6)]);
    f.service.open_phase(&f.campaign, Phase::SubjectMatter).unwrap();
    // Three labelers disagree on one item: women, muslims, other.
    let contested = ItemId::from("other-00");
    let split = [women(), muslims(), SubjectMatterLabel::other()];
    let mut given = 0;
    loop {
        let mut progressed = false;
        for a in &f.annotators {
            let Ok(task) = f.service.next_task(&f.campaign, a) else { continue };
            let answer = match &task.payload {
                TaskPayload::SubjectMatter { item, .. } if item.item_id == contested => {
                    given += 1;
                    Answer::SubjectMatter {
                        labels: [split[(given - 1) % 3].clone()].into(),
                    }
                }
                p => f.answer(p),
            };
            f.service.submit(&f.campaign, a, &task.assignment_id, answer).unwrap();
            progressed = true;
        }
        if !progressed {
            break;
        }
    }
    let status = f.service.status(&f.campaign).unwrap();
    assert_eq!(status.subject_matter.needs_adjudication, 1);
    let phase = f.service.open_phase(&f.campaign, Phase::Severity).unwrap();
    assert_eq!(phase.excluded_items, vec![contested.clone()]);
    f.drain();

    let snap = f.service.snapshot(&f.campaign).unwrap();
    let pool_of: BTreeMap<&ItemId, &Pool> = snap
        .pools
        .iter()
        .flat_map(|p| p.design.items.iter().map(move |i| (i, &p.pool)))
        .collect();
    assert!(!pool_of.contains_key(&contested));
    for item in &f.world.items {
        if item.item_id == contested {
            continue;
        }
        let expected = match item.item_id.as_str().split('-').next().unwrap() {
            "other" => Pool::General,
            g => Pool::Group(g.into()),
        };
        assert_eq!(pool_of[&item.item_id], &expected, "{}", item.item_id);
    }
    let memberships: BTreeMap<&AnnotatorId, BTreeSet<Pool>> = f
        .annotators
        .iter()
        .map(|a| (a, f.service.annotator(&f.campaign, a).unwrap().profile.pools))
        .collect();
    for j in &snap.judgments {
        let tuple_pool = pool_of[&j.best];
        assert!(memberships[&j.annotator_id].contains(tuple_pool), "{} judged {}", j.annotator_id, tuple_pool);
        assert_ne!(j.best, contested);
        assert_ne!(j.worst, contested);
    }
    assert!(f.service.status(&f.campaign).unwrap().severity_complete);
}

#[test]
fn adjudicated_items_join_the_severity_phase() {
    let f = fixture(&[("women", 6)]);
    f.service.open_phase(&f.campaign, Phase::SubjectMatter).unwrap();
    let contested = ItemId::from("women-00");
    assert!(matches!(
        f.service.adjudicate(&f.campaign, contested.clone(), [women()].into()),
        Err(ServiceError::NotAdjudicable(_))
    ));
    let mut k = 0;
    loop {
        let mut progressed = false;
        for a in &f.annotators {
            let Ok(task) = f.service.next_task(&f.campaign, a) else { continue };
            let answer = match &task.payload {
                TaskPayload::SubjectMatter { item, .. } if item.item_id == contested => {
                    k += 1;
                    let label = if k % 2 == 0 { SubjectMatterLabel::personal() } else { SubjectMatterLabel::other() };
                    let labels = if k == 3 { [women()].into() } else { [label].into() };
                    Answer::SubjectMatter { labels }
                }
                p => f.answer(p),
            };
            f.service.submit(&f.campaign, a, &task.assignment_id, answer).unwrap();
            progressed = true;
        }
        if !progressed {
            break;
        }
    }
    let resolved = f.service.adjudicate(&f.campaign, contested.clone(), [women()].into()).unwrap();
    assert!(!resolved.needs_adjudication);
    let phase = f.service.open_phase(&f.campaign, Phase::Severity).unwrap();
    assert!(phase.excluded_items.is_empty());
    assert_eq!(phase.designs[0].items, 6);
}

#[test]
fn consent_gates_tasks_and_invites_are_checked() {
    let f = fixture(&[("women", 4)]);
    f.service.open_phase(&f.campaign, Phase::SubjectMatter).unwrap();
    let invite = f
        .service
        .enroll(&f.campaign, "late".into(), [Pool::General].into())
        .unwrap();
    assert_eq!(
        f.service.next_task(&f.campaign, &invite.annotator_id).unwrap_err(),
        ServiceError::ConsentRequired
    );
    assert_eq!(
        f.service.consent(&f.campaign, &invite.annotator_id, "wrong").unwrap_err(),
        ServiceError::InvalidInvite
    );
    let creds = f.service.consent(&f.campaign, &invite.annotator_id, &invite.invite_code).unwrap();
    assert_eq!(f.service.authenticate(&f.campaign, &creds.token).unwrap(), invite.annotator_id);
    assert_eq!(f.service.authenticate(&f.campaign, "nope").unwrap_err(), ServiceError::Unauthorized);
    f.service.next_task(&f.campaign, &invite.annotator_id).unwrap();
    assert!(matches!(
        f.service.enroll(&f.campaign, "late".into(), [Pool::General].into()),
        Err(ServiceError::AnnotatorExists(_))
    ));
    assert!(matches!(
        f.service.enroll(&f.campaign, "x".into(), [Pool::Group("martians".into())].into()),
        Err(ServiceError::UnknownPool(_))
    ));
}

#[test]
fn live_assignment_is_returned_again() {
    let f = fixture(&[("women", 4)]);
    f.service.open_phase(&f.campaign, Phase::SubjectMatter).unwrap();
    let a = &f.annotators[0];
    let first = f.service.next_task(&f.campaign, a).unwrap();
    f.clock.advance(Duration::minutes(1));
    let again = f.service.next_task(&f.campaign, a).unwrap();
    assert_eq!(first, again);
}

#[test]
fn expired_lease_rejects_the_answer_and_frees_the_unit() {
    let f = fixture(&[("women", 4)]);
    f.service.open_phase(&f.campaign, Phase::SubjectMatter).unwrap();
    let a = &f.annotators[0];
    let task = f.service.next_task(&f.campaign, a).unwrap();
    assert_eq!(task.expires_at - task.issued_at, Duration::minutes(10));
    f.clock.advance(Duration::minutes(10));
    let answer = f.answer(&task.payload);
    assert_eq!(
        f.service.submit(&f.campaign, a, &task.assignment_id, answer).unwrap_err(),
        ServiceError::AssignmentExpired(task.assignment_id.clone())
    );
    assert_eq!(f.service.status(&f.campaign).unwrap().subject_matter.labelings_collected, 0);
    // The same annotator can pick the item up again with a new assignment.
    let retry = f.service.next_task(&f.campaign, a).unwrap();
    assert_ne!(retry.assignment_id, task.assignment_id);
    assert_eq!(retry.payload, task.payload);
}

#[test]
fn released_units_go_to_someone_else() {
    let f = fixture(&[("women", 1)]);
    f.service.open_phase(&f.campaign, Phase::SubjectMatter).unwrap();
    let a = &f.annotators[0];
    let task = f.service.next_task(&f.campaign, a).unwrap();
    f.service.release(&f.campaign, a, &task.assignment_id).unwrap();
    assert_eq!(
        f.service.release(&f.campaign, a, &task.assignment_id).unwrap_err(),
        ServiceError::AssignmentExpired(task.assignment_id.clone())
    );
    assert_eq!(f.service.next_task(&f.campaign, a).unwrap_err(), ServiceError::NoTaskAvailable);
    let b = &f.annotators[1];
    let other = f.service.next_task(&f.campaign, b).unwrap();
    assert_eq!(other.payload, task.payload);
}

#[test]
fn answers_are_validated_before_they_are_stored() {
    let f = fixture(&[("women", 4)]);
    f.service.open_phase(&f.campaign, Phase::SubjectMatter).unwrap();
    let a = &f.annotators[0];
    let task = f.service.next_task(&f.campaign, a).unwrap();
    let submit = |answer| f.service.submit(&f.campaign, a, &task.assignment_id, answer);

    assert_eq!(
        submit(Answer::SubjectMatter { labels: BTreeSet::new() }).unwrap_err(),
        ServiceError::EmptyLabeling
    );
    let unknown = SubjectMatterLabel::identity_group(Some(sevscale::model::Basis::Gender), Some("martians".into()));
    assert!(matches!(
        submit(Answer::SubjectMatter { labels: [unknown].into() }).unwrap_err(),
        ServiceError::InvalidLabel {
            violation: LabelViolation::UnknownIdentity { .. },
            ..
        }
    ));
    let wrong_basis = SubjectMatterLabel::identity_group(Some(sevscale::model::Basis::Religion), Some("women".into()));
    assert!(matches!(
        submit(Answer::SubjectMatter { labels: [wrong_basis].into() }).unwrap_err(),
        ServiceError::InvalidLabel {
            violation: LabelViolation::BasisMismatch { .. },
            ..
        }
    ));
    assert_eq!(
        submit(Answer::Severity {
            best: "women-00".into(),
            worst: "women-01".into()
        })
        .unwrap_err(),
        ServiceError::WrongAnswerKind
    );
    assert!(matches!(
        f.service.submit(&f.campaign, &f.annotators[1], &task.assignment_id, f.answer(&task.payload)),
        Err(ServiceError::NotOwner(_))
    ));
    assert_eq!(f.service.status(&f.campaign).unwrap().subject_matter.labelings_collected, 0);
    let ack = submit(f.answer(&task.payload)).unwrap();
    assert_eq!(ack.collected, 1);
    assert_eq!(
        submit(f.answer(&task.payload)).unwrap_err(),
        ServiceError::AlreadySubmitted(task.assignment_id.clone())
    );
}

#[test]
fn severity_answers_follow_the_forced_choice_rules() {
    let f = fixture(&[("women", 8)]);
    f.label_everything();
    f.service.open_phase(&f.campaign, Phase::Severity).unwrap();
    let a = &f.annotators[0];
    let task = f.service.next_task(&f.campaign, a).unwrap();
    let TaskPayload::Severity { items, .. } = &task.payload else { panic!("expected a tuple") };
    assert_eq!(items.len(), 4);
    let submit = |best: &ItemId, worst: &ItemId| {
        f.service.submit(
            &f.campaign,
            a,
            &task.assignment_id,
            Answer::Severity {
                best: best.clone(),
                worst: worst.clone(),
            },
        )
    };
    let first = &items[0].item_id;
    assert_eq!(
        submit(first, first).unwrap_err(),
        ServiceError::Judgment(JudgmentError::InvalidChoice)
    );
    let outside = f
        .world
        .items
        .iter()
        .map(|i| &i.item_id)
        .find(|id| items.iter().all(|i| &i.item_id != *id))
        .unwrap();
    assert!(matches!(
        submit(first, outside).unwrap_err(),
        ServiceError::Judgment(JudgmentError::ChoiceOutsideTuple { .. })
    ));
    assert!(matches!(
        f.service.submit(
            &f.campaign,
            a,
            &task.assignment_id,
            Answer::SubjectMatter { labels: [women()].into() }
        ),
        Err(ServiceError::WrongAnswerKind)
    ));
    submit(first, &items[1].item_id).unwrap();
}

#[test]
fn session_limit_stops_tasks_until_a_break() {
    let f = fixture(&[("women", 30)]);
    f.service.open_phase(&f.campaign, Phase::SubjectMatter).unwrap();
    let a = &f.annotators[0];
    // 600 session minutes of 10-minute leases held to expiry.
    let mut served = 0;
    let err = loop {
        match f.service.next_task(&f.campaign, a) {
            Ok(task) => {
                assert_eq!(task.expires_at - task.issued_at, Duration::minutes(10));
                f.clock.advance(Duration::minutes(10));
                served += 1;
            }
            Err(e) => break e,
        }
        assert!(served <= 60, "limit never reached");
    };
    assert_eq!(served, 60);
    let now = start() + Duration::minutes(600);
    let break_minutes = policy().session_break_minutes as i64;
    assert_eq!(
        err,
        ServiceError::ExposureLimitReached {
            scope: ExposureScope::Session,
            resume_at: now + Duration::minutes(break_minutes),
        }
    );
    let view = f.service.annotator(&f.campaign, a).unwrap();
    assert_eq!(view.exposure.session_seconds, 600 * 60);
    assert_eq!(view.exposure.daily_seconds, 600 * 60);

    f.clock.advance(Duration::minutes(break_minutes - 1));
    assert!(matches!(
        f.service.next_task(&f.campaign, a),
        Err(ServiceError::ExposureLimitReached { scope: ExposureScope::Session, .. })
    ));
    f.clock.advance(Duration::minutes(1));
    f.service.next_task(&f.campaign, a).unwrap();
}

#[test]
fn exposure_limits_cap_leases_and_reset() {
    let mut p = policy();
    p.max_session_minutes = 25;
    p.max_daily_minutes = 40;
    p.session_break_minutes = 15;
    let clock = sevscale_service::ManualClock::new(start());
    let service = sevscale_service::Service::in_memory(std::sync::Arc::new(clock.clone()));
    let campaign = sevscale::CampaignId::from("limits");
    service.create_campaign(campaign.clone(), p).unwrap();
    service.set_registry(&campaign, registry()).unwrap();
    service.add_items(&campaign, world(&[("women", 20)]).items).unwrap();
    let ids = enroll_all(&service, &campaign, &[("solo", &["general"])]);
    let a = &ids[0];
    service.open_phase(&campaign, Phase::SubjectMatter).unwrap();

    let hold = |expect: i64| {
        let task = service.next_task(&campaign, a).unwrap();
        assert_eq!(task.expires_at - task.issued_at, Duration::minutes(expect));
        clock.advance(task.expires_at - task.issued_at);
    };
    hold(10);
    hold(10);
    // Five minutes left in the session: the lease is capped.
    hold(5);
    let Err(ServiceError::ExposureLimitReached { scope, resume_at }) = service.next_task(&campaign, a) else {
        panic!("session limit not enforced")
    };
    assert_eq!(scope, ExposureScope::Session);
    assert_eq!(resume_at, start() + Duration::minutes(25 + 15));

    clock.set(resume_at);
    hold(10);
    // 35 minutes used today, 5 remain.
    hold(5);
    let Err(ServiceError::ExposureLimitReached { scope, resume_at }) = service.next_task(&campaign, a) else {
        panic!("daily limit not enforced")
    };
    assert_eq!(scope, ExposureScope::Daily);
    assert_eq!(resume_at, start().date_naive().succ_opt().unwrap().and_hms_opt(0, 0, 0).unwrap().and_utc());

    clock.set(resume_at);
    hold(10);
    let view = service.annotator(&campaign, a).unwrap();
    assert_eq!(view.exposure.daily_seconds, 600);
    assert_eq!(view.profile.exposure_seconds.values().sum::<u64>(), 50 * 60);
}

#[test]
fn no_annotator_judges_a_tuple_twice() {
    let f = fixture(&[("women", 6)]);
    f.label_everything();
    f.service.open_phase(&f.campaign, Phase::Severity).unwrap();
    f.drain();
    let snap = f.service.snapshot(&f.campaign).unwrap();
    // Each (annotator, tuple) pair is judged at most once.
    let mut seen = BTreeSet::new();
    for j in &snap.judgments {
        assert!(seen.insert((j.annotator_id.clone(), j.tuple_id.clone())));
    }
}

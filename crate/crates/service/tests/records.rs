use neurochat_core::ingest::ReplaySpeed;
use neurochat_service::source::SourceSpec;
use neurochat_service::store::{
    load_all, save_record, Chat, SessionPaths, SessionRecord, Settings, SettingsPatch,
};
use proptest::prelude::*;

fn settings() -> impl Strategy<Value = Settings> {
    (any::<bool>(), any::<bool>(), any::<bool>()).prop_map(|(m, d, k)| Settings {
        mood_mode: m,
        debug_mode: d,
        dark_mode: k,
    })
}

fn patch() -> impl Strategy<Value = SettingsPatch> {
    (
        any::<Option<bool>>(),
        any::<Option<bool>>(),
        any::<Option<bool>>(),
    )
        .prop_map(|(m, d, k)| SettingsPatch {
            mood_mode: m,
            debug_mode: d,
            dark_mode: k,
        })
}

proptest! {
    #[test]
    fn patches_touch_only_their_fields(start in settings(), p in patch()) {
        let mut s = start;
        s.apply(&p);
        prop_assert_eq!(s.mood_mode, p.mood_mode.unwrap_or(start.mood_mode));
        prop_assert_eq!(s.debug_mode, p.debug_mode.unwrap_or(start.debug_mode));
        prop_assert_eq!(s.dark_mode, p.dark_mode.unwrap_or(start.dark_mode));
        let once = s;
        s.apply(&p);
        prop_assert_eq!(s, once);
    }

    #[test]
    fn descriptor_parsing_never_panics(s in "\\PC{0,40}") {
        let _ = s.parse::<SourceSpec>();
    }

    #[test]
    fn file_descriptors_keep_path_and_speed(
        path in "[a-z0-9_/.-]{1,30}",
        factor in 0.01f64..1000.0,
        synth in any::<bool>(),
    ) {
        let scheme = if synth { "synth" } else { "replay" };
        let parsed: SourceSpec = format!("{scheme}://{path}?speed={factor}x").parse().unwrap();
        let (p, speed) = match parsed {
            SourceSpec::Synth { path, speed } if synth => (path, speed),
            SourceSpec::Replay { path, speed } if !synth => (path, speed),
            other => panic!("wrong variant {other:?}"),
        };
        prop_assert_eq!(p.to_str().unwrap(), path.as_str());
        prop_assert_eq!(speed, ReplaySpeed::Factor(factor));
    }

    #[test]
    fn records_round_trip_through_disk(
        created in any::<u64>(),
        s in settings(),
        folders in proptest::collection::vec("\\PC{0,12}", 0..4),
        titles in proptest::collection::vec(("\\PC{0,20}", proptest::option::of("\\PC{0,8}")), 0..5),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let mut rec = SessionRecord::new("s1".into(), created);
        rec.settings = s;
        rec.history.folders = folders;
        for (i, (title, folder)) in titles.into_iter().enumerate() {
            rec.history.chats.push(Chat {
                id: format!("c{i}"),
                title,
                folder,
                created_ms: i as u64,
                turns: Vec::new(),
            });
        }
        save_record(&SessionPaths::new(dir.path(), "s1"), &rec).unwrap();
        let (loaded, errors) = load_all(dir.path()).unwrap();
        prop_assert!(errors.is_empty());
        prop_assert_eq!(loaded, vec![rec]);
    }
}

#[test]
fn bridge_descriptors_take_no_query() {
    assert_eq!(
        "bridge://127.0.0.1:9000".parse::<SourceSpec>(),
        Ok(SourceSpec::Bridge {
            addr: "127.0.0.1:9000".into()
        })
    );
    assert!("bridge://127.0.0.1:9000?speed=max"
        .parse::<SourceSpec>()
        .is_err());
    assert!("bridge://localhost".parse::<SourceSpec>().is_err());
    assert!("replay://".parse::<SourceSpec>().is_err());
    assert!("replay://a.csv?speed=0".parse::<SourceSpec>().is_err());
    assert!("replay://a.csv?pace=max".parse::<SourceSpec>().is_err());
}

use codazzi::cone::{wedge_surgery, WedgeScene};
use codazzi::holonomy::{SurfaceGroup, TransCocycle};
use codazzi::mink::{z_rotation, MinkVec};
use proptest::prelude::*;

#[test]
fn octagon_group_round_trips() {
    let g = SurfaceGroup::build_genus2_octagon().unwrap();
    let back = SurfaceGroup::from_json(&g.to_json()).unwrap();
    assert_eq!(back.to_json(), g.to_json());
    assert_eq!(back.side_pairings(), g.side_pairings());
}

#[test]
fn rotated_group_round_trips() {
    let g = SurfaceGroup::build_genus2_octagon().unwrap().conjugate(&z_rotation(0.7)).unwrap();
    let back = SurfaceGroup::from_json(&g.to_json()).unwrap();
    assert!(back.relator_defect() < 1e-9);
}

#[test]
fn broken_group_is_rejected() {
    let g = SurfaceGroup::build_genus2_octagon().unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&g.to_json()).unwrap();
    doc["generators"][0][0] = serde_json::json!(2.0);
    assert!(SurfaceGroup::from_json(&doc.to_string()).is_err());
    doc = serde_json::from_str(&g.to_json()).unwrap();
    doc["octagon_vertices"][3]["z"] = serde_json::json!(0.5);
    assert!(SurfaceGroup::from_json(&doc.to_string()).is_err());
    assert!(SurfaceGroup::from_json("{}").is_err());
}

#[test]
fn cocycle_rejects_missing_or_non_finite() {
    assert!(TransCocycle::from_json(r#"{"values": []}"#).is_err());
    assert!(TransCocycle::from_json("not json").is_err());
    let z = TransCocycle::zero().to_json();
    assert!(TransCocycle::from_json(&z.replacen("0.0", "1e999", 1)).is_err());
}

proptest! {
    #[test]
    fn cocycle_round_trips(v in prop::collection::vec(-1e6f64..1e6, 12)) {
        let t = TransCocycle::from_flat(&v);
        let back = TransCocycle::from_json(&t.to_json()).unwrap();
        prop_assert_eq!(back.to_flat(), t.to_flat());
    }

    #[test]
    fn wedge_scene_round_trips_and_never_panics(
        theta in -1.0f64..7.0,
        edge_distance in -1.0f64..10.0,
        bisector_distance in -1.0f64..10.0,
    ) {
        let scene = WedgeScene { theta, edge_distance, bisector_distance };
        let back = WedgeScene::from_json(&serde_json::to_string(&scene).unwrap()).unwrap();
        prop_assert_eq!(back, scene);
        let _ = wedge_surgery(&scene);
    }
}

#[test]
fn mink_vec_fields_are_named() {
    let v: MinkVec = serde_json::from_str(r#"{"x": 1.0, "y": 2.0, "z": 3.0}"#).unwrap();
    assert_eq!(v, MinkVec::new(1.0, 2.0, 3.0));
}

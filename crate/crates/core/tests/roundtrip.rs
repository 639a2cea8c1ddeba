use accelforge::builder::{instantiate_template, TemplateKind, TemplateParams};
use accelforge::cost::{generic_28nm, load_library, CostEntry, IpCostParams, UnitCostLibrary};
use accelforge::dnn::{parse_model, DnnModel, Kernel, LayerKind, LayerSpec, Precision, TensorShape};
use accelforge::graph::{bind_mapping, build_bound_graph, build_graph, parse_arch, DataSchedule, IpKind};
use proptest::prelude::*;

fn chain_model(widths: &[u32], h: u32, w: u32, relu_every: usize, bits: u32) -> DnnModel {
    let mut layers = Vec::new();
    let mut prev: Option<String> = None;
    let mut c_in = 3;
    for (i, &c_out) in widths.iter().enumerate() {
        let id = format!("conv{i}");
        layers.push(LayerSpec {
            id: id.clone(),
            kind: LayerKind::Conv,
            input_shape: TensorShape::new(c_in, h, w),
            output_shape: TensorShape::new(c_out, h, w),
            kernel: Some(Kernel { height: 3, width: 3 }),
            stride: 1,
            padding: Some(1),
            predecessors: prev.iter().cloned().collect(),
        });
        prev = Some(id);
        if relu_every > 0 && i % relu_every == 0 {
            let rid = format!("relu{i}");
            layers.push(LayerSpec {
                id: rid.clone(),
                kind: LayerKind::ReLU,
                input_shape: TensorShape::new(c_out, h, w),
                output_shape: TensorShape::new(c_out, h, w),
                kernel: None,
                stride: 1,
                padding: None,
                predecessors: prev.iter().cloned().collect(),
            });
            prev = Some(rid);
        }
        c_in = c_out;
    }
    DnnModel::new("chain", layers, Precision::new(bits, bits, 32)).unwrap()
}

fn cost_value() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), 1e-15f64..1e-6]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn model_documents_round_trip(
        widths in prop::collection::vec(1u32..64, 1..6),
        h in 1u32..20,
        w in 1u32..20,
        relu_every in 0usize..3,
        bits in 1u32..17,
    ) {
        let m = chain_model(&widths, h, w, relu_every, bits);
        let back = parse_model(&m.to_json()).unwrap();
        prop_assert_eq!(back.total_macs(), m.total_macs());
        prop_assert_eq!(back, m);
    }

    #[test]
    fn cost_documents_round_trip(
        values in prop::collection::vec(prop::array::uniform8(cost_value()), 1..6),
        host in (cost_value(), cost_value()),
    ) {
        let mut lib = UnitCostLibrary::default();
        lib.host.energy = host.0;
        lib.host.latency = host.1;
        let kinds = [IpKind::Computation, IpKind::DataPath, IpKind::Memory];
        for (i, v) in values.iter().enumerate() {
            let kind = kinds[i % 3];
            let mut p = IpCostParams {
                e_warmup: v[0],
                l_warmup: v[1],
                e_control_per_state: v[2],
                l_control_per_state: v[3],
                e_mac: v[4],
                l_mac: v[5],
                e_bit: v[6],
                l_bit: v[7],
            };
            // Fields a kind does not use stay at zero.
            if kind == IpKind::Computation {
                p.l_control_per_state = 0.0;
                p.e_bit = 0.0;
                p.l_bit = 0.0;
            } else {
                p.e_mac = 0.0;
                p.l_mac = 0.0;
            }
            lib.insert(&format!("ip{i}"), "prop", CostEntry { kind, params: p });
        }
        let back = load_library(&lib.to_json("prop")).unwrap();
        for (imp, tech) in lib.keys() {
            prop_assert_eq!(back.lookup(imp, tech).unwrap(), lib.lookup(imp, tech).unwrap());
        }
        prop_assert_eq!(back.len(), lib.len());
        prop_assert_eq!(back.host, lib.host);
    }

    #[test]
    fn template_architectures_round_trip(
        kind in prop::sample::select(vec![
            TemplateKind::AdderTreeSpatial,
            TemplateKind::HeteroDwConv,
            TemplateKind::SystolicArray,
            TemplateKind::RowStationaryNoc,
        ]),
        size in 1u64..6,
        bus in prop::sample::select(vec![16u64, 32, 64, 128]),
    ) {
        let name = match kind {
            TemplateKind::AdderTreeSpatial => "unroll",
            TemplateKind::HeteroDwConv => "conv_unroll",
            _ => "dim",
        };
        let params = TemplateParams::from([(name.to_string(), size), ("bus_width".to_string(), bus)]);
        let arch = instantiate_template(kind, &params).unwrap();
        let back = parse_arch(&arch.to_json()).unwrap();
        prop_assert_eq!(&back, &arch);
        let costs = generic_28nm();
        prop_assert_eq!(build_graph(&back, &costs).unwrap(), build_graph(&arch, &costs).unwrap());
    }

    #[test]
    fn bound_graphs_round_trip_through_documents(
        widths in prop::collection::vec(1u32..24, 1..4),
        hw in 2u32..10,
        tile in 1u32..9,
    ) {
        let costs = generic_28nm();
        let arch = instantiate_template(TemplateKind::AdderTreeSpatial, &TemplateParams::new()).unwrap();
        let schedule = DataSchedule { tile_channels: Some(tile), ..DataSchedule::named("t") };
        let bound = bind_mapping(&build_graph(&arch, &costs).unwrap(), &chain_model(&widths, hw, hw, 1, 8), &schedule).unwrap();
        let doc = bound.to_arch().to_json();
        let back = build_bound_graph(&parse_arch(&doc).unwrap(), &costs).unwrap();
        prop_assert_eq!(back.state_count(), bound.state_count());
        prop_assert_eq!(back.total_mac_work(), bound.total_mac_work());
        prop_assert_eq!(back.to_arch().to_json(), doc);
    }
}

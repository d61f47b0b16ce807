use pdte_core::he::{keygen, HeParams, KeyTriple, DEFAULT_INT_MODULUS};
use pdte_core::pdte_bin::{PackingMode, PathAlgorithm};
use pdte_core::protocol::{
    client_round_trip, randomizer_provision, ClassifyRequest, ClassifyResponse, Client,
    ClientConfig, DirTransport, MemoryTransport, Scheme, Server, Transport,
};
use pdte_core::tree::{complete_tree, random_tree};
use pdte_core::{AttributeVector, CtHandle, Error, TreeModel};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn setup(
    scheme: Scheme,
    packing: PackingMode,
    model: TreeModel,
    slots: usize,
) -> (Client, Server, KeyTriple) {
    let params = match scheme {
        Scheme::Bin => HeParams::binary(slots, 40),
        Scheme::Int => HeParams::integer(DEFAULT_INT_MODULUS, slots, 40),
    };
    let keys = keygen(&params).unwrap();
    let config = ClientConfig::for_model(model.params(), scheme, packing);
    let client = Client::new(config, keys.pk.clone(), keys.sk.clone(), 1);
    let server = Server::new(
        keys.pk.clone(),
        keys.ek.clone(),
        model,
        PathAlgorithm::Dag,
        2,
    );
    (client, server, keys)
}

#[test]
fn binary_round_trips_use_two_messages() {
    let mut rng = ChaCha20Rng::seed_from_u64(10);
    for i in 0..100 {
        let model = random_tree(6, 8, 4, 16, 0.2, &mut rng);
        let packing = [
            PackingMode::None,
            PackingMode::LabelPacking,
            PackingMode::ThresholdPacking,
        ][i % 3];
        let (mut client, server, _) = setup(Scheme::Bin, packing, model.clone(), 16);
        let x = AttributeVector::random(&mut rng, model.params());
        let transport = MemoryTransport::default();
        let (labels, _) =
            client_round_trip(&mut client, &server, &transport, std::slice::from_ref(&x)).unwrap();
        assert_eq!(labels, vec![model.classify_plain(&x).unwrap()]);
        assert_eq!(transport.messages(), 2);
    }
}

#[test]
fn integer_round_trips_use_two_messages() {
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    for i in 0..100 {
        let model = random_tree(6, 8, 4, 16, 0.2, &mut rng);
        let packing = [
            PackingMode::None,
            PackingMode::LabelPacking,
            PackingMode::ThresholdPacking,
        ][i % 3];
        let (mut client, server, _) = setup(Scheme::Int, packing, model.clone(), 16);
        let x = AttributeVector::random(&mut rng, model.params());
        let transport = MemoryTransport::default();
        let (labels, resp) =
            client_round_trip(&mut client, &server, &transport, std::slice::from_ref(&x)).unwrap();
        assert_eq!(labels, vec![model.classify_plain(&x).unwrap()]);
        assert_eq!(transport.messages(), 2);
        let leaves = model.params().leaves();
        let expected = if packing == PackingMode::None {
            leaves
        } else {
            leaves.div_ceil(16)
        };
        assert_eq!(resp.results.len(), expected);
    }
}

#[test]
fn attribute_packing_batches_a_full_slot_vector() {
    let mut rng = ChaCha20Rng::seed_from_u64(12);
    let model = complete_tree(5, 8, 3, &mut rng);
    let (mut client, server, _) = setup(
        Scheme::Bin,
        PackingMode::AttributePacking,
        model.clone(),
        16,
    );
    let xs: Vec<AttributeVector> = (0..16)
        .map(|_| AttributeVector::random(&mut rng, model.params()))
        .collect();
    let transport = MemoryTransport::default();
    let (labels, _) = client_round_trip(&mut client, &server, &transport, &xs).unwrap();
    let expected: Vec<u64> = xs
        .iter()
        .map(|x| model.classify_plain(x).unwrap())
        .collect();
    assert_eq!(labels, expected);
    assert_eq!(transport.messages(), 2);
}

#[test]
fn attribute_packing_is_rejected_for_integers() {
    let mut rng = ChaCha20Rng::seed_from_u64(13);
    let model = complete_tree(2, 4, 1, &mut rng);
    let (mut client, _, _) = setup(Scheme::Int, PackingMode::AttributePacking, model.clone(), 4);
    let x = AttributeVector::random(&mut rng, model.params());
    assert!(matches!(client.request(&[x]), Err(Error::Unsupported(_))));
}

#[test]
fn blinded_requests_round_trip() {
    let mut rng = ChaCha20Rng::seed_from_u64(14);
    for scheme in [Scheme::Bin, Scheme::Int] {
        let model = complete_tree(4, 6, 3, &mut rng);
        let (mut client, server, keys) = setup(scheme, PackingMode::None, model.clone(), 8);
        let (mut masks, server_masks) = randomizer_provision(&keys.pk, 200, &mut rng).unwrap();
        assert!(server_masks.offline_bytes() > 0);
        server.add_session(server_masks);
        for _ in 0..3 {
            let x = AttributeVector::random(&mut rng, model.params());
            let request = client
                .blinded_request(std::slice::from_ref(&x), &mut masks)
                .unwrap();
            let bytes = request.to_bytes();
            let response =
                ClassifyResponse::from_bytes(&server.serve_bytes(&bytes).unwrap()).unwrap();
            assert_eq!(
                client.decode(&response).unwrap(),
                vec![model.classify_plain(&x).unwrap()]
            );
            // Replaying the same request reuses its masks.
            assert!(matches!(server.serve_bytes(&bytes), Err(Error::Session(_))));
        }
    }
}

#[test]
fn forged_depth_is_rejected_before_evaluation() {
    let mut rng = ChaCha20Rng::seed_from_u64(15);
    let model = complete_tree(3, 4, 2, &mut rng);
    let (mut client, server, _) = setup(Scheme::Bin, PackingMode::None, model.clone(), 4);
    let x = AttributeVector::random(&mut rng, model.params());
    let mut request = client.request(&[x]).unwrap();
    let c = CtHandle::from_bytes(&request.blobs[3], 40).unwrap();
    request.blobs[3] = CtHandle::from_parts(c.context(), 41, 40, c.payload().into()).to_bytes();
    let err = server.serve(&request).unwrap_err();
    assert!(
        matches!(err, Error::Protocol(ref m) if m.contains("capacity")),
        "{err}"
    );
}

#[test]
fn header_mismatch_is_rejected() {
    let mut rng = ChaCha20Rng::seed_from_u64(16);
    let model = complete_tree(3, 4, 2, &mut rng);
    let (mut client, server, _) = setup(Scheme::Bin, PackingMode::None, model.clone(), 4);
    let x = AttributeVector::random(&mut rng, model.params());
    let request = client.request(&[x]).unwrap();
    let mut wrong_mu = request.clone();
    wrong_mu.header.mu = 5;
    assert!(matches!(server.serve(&wrong_mu), Err(Error::Protocol(_))));
    let mut wrong_scheme = request.clone();
    wrong_scheme.header.scheme = Scheme::Int;
    assert!(matches!(
        server.serve(&wrong_scheme),
        Err(Error::Protocol(_))
    ));
    let mut short = request;
    short.blobs.pop();
    assert!(matches!(server.serve(&short), Err(Error::Protocol(_))));
}

#[test]
fn offline_directory_carries_both_messages() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(17);
    let model = complete_tree(4, 8, 2, &mut rng);
    let (mut client, server, _) = setup(Scheme::Int, PackingMode::LabelPacking, model.clone(), 16);
    let transport = DirTransport::new(dir.path()).unwrap();
    let x = AttributeVector::random(&mut rng, model.params());
    let (labels, _) =
        client_round_trip(&mut client, &server, &transport, std::slice::from_ref(&x)).unwrap();
    assert_eq!(labels, vec![model.classify_plain(&x).unwrap()]);
    assert_eq!(transport.messages(), 2);
    let request = std::fs::read(dir.path().join(DirTransport::REQUEST_FILE)).unwrap();
    assert_eq!(
        ClassifyRequest::from_bytes(&request).unwrap().to_bytes(),
        request
    );
}

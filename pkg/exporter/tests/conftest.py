import json

import pytest
import torch
from transformers import (
    CLIPConfig,
    CLIPImageProcessor,
    CLIPModel,
    CLIPProcessor,
    CLIPTokenizer,
)

from exutil import make_image

VOCAB = [
    "l", "o", "w", "e", "r", "s", "t", "i", "d", "n",
    "lo", "l</w>", "w</w>", "r</w>", "t</w>", "low</w>", "er</w>",
    "lowest</w>", "newer</w>", "wider", "<unk>", "<|startoftext|>", "<|endoftext|>",
]
MERGES = ["#version: 0.2", "l o", "lo w</w>", "e r</w>"]


@pytest.fixture(scope="session")
def tiny_clip_dir(tmp_path_factory):
    """A complete, locally saved CLIP checkpoint small enough for tests."""
    d = tmp_path_factory.mktemp("tiny_clip")
    vocab_file = d / "vocab.json"
    merges_file = d / "merges.txt"
    vocab_file.write_text(json.dumps({tok: i for i, tok in enumerate(VOCAB)}))
    merges_file.write_text("\n".join(MERGES) + "\n")

    tokenizer = CLIPTokenizer(str(vocab_file), str(merges_file))
    image_processor = CLIPImageProcessor(
        size={"shortest_edge": 30}, crop_size={"height": 30, "width": 30}
    )
    processor = CLIPProcessor(image_processor=image_processor, tokenizer=tokenizer)

    config = CLIPConfig(
        text_config={
            "hidden_size": 32,
            "intermediate_size": 37,
            "num_attention_heads": 4,
            "num_hidden_layers": 2,
            "vocab_size": len(VOCAB),
            "max_position_embeddings": 77,
            "bos_token_id": VOCAB.index("<|startoftext|>"),
            "eos_token_id": VOCAB.index("<|endoftext|>"),
        },
        vision_config={
            "hidden_size": 32,
            "intermediate_size": 37,
            "num_attention_heads": 4,
            "num_hidden_layers": 2,
            "image_size": 30,
            "patch_size": 15,
        },
        projection_dim=16,
    )
    torch.manual_seed(0)
    model = CLIPModel(config)
    model.save_pretrained(d)
    processor.save_pretrained(d)
    return d


@pytest.fixture(scope="session")
def encoder(tiny_clip_dir):
    from embexport.export import ClipEncoder

    return ClipEncoder(str(tiny_clip_dir), batch_size=2)


@pytest.fixture()
def toy_dataset(tmp_path):
    """2 classes x 2 solid-color images."""
    root = tmp_path / "data"
    (root / "cls_a").mkdir(parents=True)
    (root / "cls_b").mkdir()
    make_image(root / "cls_a" / "img0.png", (200, 30, 30))
    make_image(root / "cls_a" / "img1.png", (30, 200, 30))
    make_image(root / "cls_b" / "img0.png", (30, 30, 200))
    make_image(root / "cls_b" / "img1.png", (180, 180, 30))
    return root

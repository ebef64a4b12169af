# Copyright 2026 The ConvForge Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Hugging Face backend ("pretrained") for the model registry.

Options (the `backend_options` config section):
  causal_model    hub id or local path of a causal LM, default "gpt2"
  seq2seq_model   hub id or local path of a summarizer, default
                  "sshleifer/distilbart-cnn-12-6"
  random_init     build small randomly initialized models with a word-level
                  tokenizer over the training corpus (no download)
  device          torch device, default "cpu"
"""

import copy
import json
import math
import os
import random

import torch
import torch.nn.functional as F

from . import _core

STRUCTURAL = ["<bos>", "<eos>", "<dialog>", "<context>", "<turns_to_go>", "<speaker>", "<turn_length>", "<turn>"]
MAX_SPEAKERS = 16
SPEAKER_TAGS = ["<person_%d>" % k for k in range(MAX_SPEAKERS)]
CAUSAL_MAX = 512
SOURCE_MAX = 512
TARGET_MAX = 80


def _word_tokenizer(corpus):
    from tokenizers import Tokenizer, models, pre_tokenizers
    from transformers import PreTrainedTokenizerFast

    vocab = {"<pad>": 0, "<unk>": 1}
    for tok in STRUCTURAL + SPEAKER_TAGS:
        vocab.setdefault(tok, len(vocab))
    for text in corpus:
        for w in _core.surface_tokens(text):
            vocab.setdefault(w, len(vocab))
    tk = Tokenizer(models.WordLevel(vocab=vocab, unk_token="<unk>"))
    tk.pre_tokenizer = pre_tokenizers.WhitespaceSplit()
    return PreTrainedTokenizerFast(tokenizer_object=tk, unk_token="<unk>", pad_token="<pad>",
                                   bos_token="<bos>", eos_token="<eos>")


def _with_markup(tokenizer):
    tokenizer.add_special_tokens({"additional_special_tokens": STRUCTURAL + SPEAKER_TAGS})
    if tokenizer.pad_token is None:
        tokenizer.pad_token = tokenizer.eos_token or "<eos>"
    return tokenizer


def _train_schedule(cfg, n_items):
    steps_per_epoch = math.ceil(n_items / (cfg["batch_size"] * cfg["gradient_accumulation"]))
    return steps_per_epoch * cfg["epochs"]


def _linear(step, warmup, total):
    if warmup > 0 and step < warmup:
        return step / warmup
    if total <= warmup:
        return 1.0
    return max(0.0, (total - step) / (total - warmup))


def _write_marker(path, kind):
    os.makedirs(path, exist_ok=True)
    with open(os.path.join(path, "config.json"), "w") as f:
        json.dump({"backend": "pretrained", "kind": kind}, f, indent=2)
        f.write("\n")


class PretrainedCausalLM:
    def __init__(self, model, tokenizer, device="cpu"):
        self.device = torch.device(device)
        self.model = model.to(self.device)
        self.tokenizer = tokenizer
        self.model.resize_token_embeddings(len(tokenizer))
        hidden = self.model.config.hidden_size if hasattr(self.model.config, "hidden_size") else self.model.config.n_embd
        self.value_head = torch.nn.Linear(hidden, 1).to(self.device)
        torch.nn.init.zeros_(self.value_head.weight)
        torch.nn.init.zeros_(self.value_head.bias)
        self.optimizer = None

    @classmethod
    def create(cls, corpus, options):
        torch.manual_seed(int(options.get("seed", 0)))
        device = options.get("device", "cpu")
        if options.get("random_init"):
            from transformers import GPT2Config, GPT2LMHeadModel

            tok = _with_markup(_word_tokenizer(corpus))
            config = GPT2Config(vocab_size=len(tok), n_positions=CAUSAL_MAX, n_embd=int(options.get("n_embd", 64)),
                                n_layer=int(options.get("n_layer", 2)), n_head=int(options.get("n_head", 2)),
                                bos_token_id=tok.bos_token_id, eos_token_id=tok.eos_token_id,
                                pad_token_id=tok.pad_token_id)
            return cls(GPT2LMHeadModel(config), tok, device)
        from transformers import AutoModelForCausalLM, AutoTokenizer

        name = options.get("causal_model", "gpt2")
        return cls(AutoModelForCausalLM.from_pretrained(name), _with_markup(AutoTokenizer.from_pretrained(name)), device)

    @classmethod
    def load(cls, path):
        from transformers import AutoModelForCausalLM, AutoTokenizer

        hf = os.path.join(path, "hf")
        obj = cls(AutoModelForCausalLM.from_pretrained(hf), AutoTokenizer.from_pretrained(hf))
        obj.value_head.load_state_dict(torch.load(os.path.join(path, "value_head.pt")))
        return obj

    # model protocol

    def backend_name(self):
        return "pretrained"

    def max_length(self):
        n = getattr(self.model.config, "n_positions", None) or getattr(self.model.config, "max_position_embeddings", CAUSAL_MAX)
        return min(CAUSAL_MAX, int(n))

    def encode(self, text, tokens):
        return self.tokenizer(text, add_special_tokens=False)["input_ids"]

    def decode(self, ids):
        return self.tokenizer.decode(ids, skip_special_tokens=False, clean_up_tokenization_spaces=False)

    def token_id(self, surface):
        i = self.tokenizer.convert_tokens_to_ids(surface)
        if i is None or i == self.tokenizer.unk_token_id:
            return None
        return int(i)

    def vocab_size(self):
        return len(self.tokenizer)

    def _forward(self, ids):
        x = torch.tensor([ids[-self.max_length():]], device=self.device)
        out = self.model(input_ids=x, output_hidden_states=True)
        return out.logits[0], out.hidden_states[-1][0]

    def finetune(self, texts, cfg):
        rng = random.Random(cfg["seed"])
        seqs = [self.encode(t, None)[: self.max_length()] for t in texts]
        seqs = [s for s in seqs if len(s) >= 2]
        opt = torch.optim.AdamW(self.model.parameters(), lr=cfg["learning_rate"], eps=cfg["adam_epsilon"])
        total = _train_schedule(cfg, len(seqs))
        step, losses = 0, []
        self.model.train()
        for _ in range(cfg["epochs"]):
            order = list(range(len(seqs)))
            rng.shuffle(order)
            loss_sum, tok_sum, micro = 0.0, 0, 0
            for start in range(0, len(order), cfg["batch_size"]):
                batch = [seqs[i] for i in order[start:start + cfg["batch_size"]]]
                n_tok = sum(len(s) - 1 for s in batch)
                for s in batch:
                    logits, _ = self._forward(s)
                    loss = F.cross_entropy(logits[:-1], torch.tensor(s[1:], device=self.device), reduction="sum")
                    (loss / (n_tok * cfg["gradient_accumulation"])).backward()
                    loss_sum += loss.item()
                tok_sum += n_tok
                micro += 1
                if micro % cfg["gradient_accumulation"] == 0 or start + cfg["batch_size"] >= len(order):
                    torch.nn.utils.clip_grad_norm_(self.model.parameters(), cfg["max_grad_norm"])
                    for g in opt.param_groups:
                        g["lr"] = cfg["learning_rate"] * _linear(step, cfg["warmup_steps"], total)
                    opt.step()
                    opt.zero_grad()
                    step += 1
            losses.append(loss_sum / max(tok_sum, 1))
        self.model.eval()
        return {"epoch_loss": losses, "skipped_sequences": len(texts) - len(seqs), "optimizer_steps": step}

    @torch.no_grad()
    def next_token_logprobs(self, context):
        logits, _ = self._forward(list(context))
        return F.log_softmax(logits[-1].double(), dim=-1).tolist()

    def _score(self, prompt, response):
        ids = list(prompt) + list(response)
        logits, hidden = self._forward(ids)
        n = len(response)
        lp = F.log_softmax(logits[-n - 1:-1], dim=-1)
        lp = lp.gather(1, torch.tensor(ids[-n:], device=self.device).unsqueeze(1)).squeeze(1)
        values = self.value_head(hidden[-n - 1:-1]).squeeze(1)
        return lp, values

    @torch.no_grad()
    def score(self, prompt, response):
        lp, values = self._score(prompt, response)
        return lp.double().tolist(), values.double().tolist()

    def accumulate_gradient(self, prompt, response, d_logprobs, d_values):
        lp, values = self._score(prompt, response)
        a = torch.tensor(d_logprobs, dtype=lp.dtype, device=self.device)
        b = torch.tensor(d_values, dtype=values.dtype, device=self.device)
        ((lp * a).sum() + (values * b).sum()).backward()

    def _params(self):
        return list(self.model.parameters()) + list(self.value_head.parameters())

    def zero_grad(self):
        for p in self._params():
            p.grad = None

    def reset_optimizer(self):
        self.optimizer = None

    def apply_gradients(self, learning_rate, max_grad_norm, adam_epsilon):
        params = [p for p in self._params() if p.grad is not None]
        if not params:
            return 0.0
        limit = max_grad_norm if max_grad_norm and max_grad_norm > 0 and math.isfinite(max_grad_norm) else float("inf")
        norm = float(torch.nn.utils.clip_grad_norm_(params, limit))
        if self.optimizer is None:
            self.optimizer = torch.optim.Adam(self._params(), lr=learning_rate, eps=adam_epsilon)
        for g in self.optimizer.param_groups:
            g["lr"] = learning_rate
        self.optimizer.step()
        self.zero_grad()
        return norm

    def clone(self):
        other = copy.copy(self)
        other.model = copy.deepcopy(self.model)
        other.value_head = copy.deepcopy(self.value_head)
        other.optimizer = None
        return other

    def save(self, path):
        _write_marker(path, "causal")
        self.model.save_pretrained(os.path.join(path, "hf"))
        self.tokenizer.save_pretrained(os.path.join(path, "hf"))
        torch.save(self.value_head.state_dict(), os.path.join(path, "value_head.pt"))


class PretrainedSeq2Seq:
    def __init__(self, model, tokenizer, device="cpu"):
        self.device = torch.device(device)
        self.model = model.to(self.device)
        self.tokenizer = tokenizer
        self.model.resize_token_embeddings(len(tokenizer))

    @classmethod
    def create(cls, corpus, options):
        torch.manual_seed(int(options.get("seed", 0)))
        device = options.get("device", "cpu")
        if options.get("random_init"):
            from transformers import BartConfig, BartForConditionalGeneration

            tok = _with_markup(_word_tokenizer(corpus))
            d = int(options.get("n_embd", 64))
            config = BartConfig(vocab_size=len(tok), d_model=d, encoder_layers=1, decoder_layers=1,
                                encoder_attention_heads=2, decoder_attention_heads=2, encoder_ffn_dim=2 * d,
                                decoder_ffn_dim=2 * d, max_position_embeddings=SOURCE_MAX,
                                pad_token_id=tok.pad_token_id, bos_token_id=tok.bos_token_id,
                                eos_token_id=tok.eos_token_id, decoder_start_token_id=tok.bos_token_id,
                                forced_eos_token_id=tok.eos_token_id)
            return cls(BartForConditionalGeneration(config), tok, device)
        from transformers import AutoModelForSeq2SeqLM, AutoTokenizer

        name = options.get("seq2seq_model", "sshleifer/distilbart-cnn-12-6")
        return cls(AutoModelForSeq2SeqLM.from_pretrained(name), _with_markup(AutoTokenizer.from_pretrained(name)), device)

    @classmethod
    def load(cls, path):
        from transformers import AutoModelForSeq2SeqLM, AutoTokenizer

        hf = os.path.join(path, "hf")
        return cls(AutoModelForSeq2SeqLM.from_pretrained(hf), AutoTokenizer.from_pretrained(hf))

    def backend_name(self):
        return "pretrained"

    def _batch(self, sources, targets=None):
        enc = self.tokenizer(sources, max_length=SOURCE_MAX, truncation=True, padding=True, return_tensors="pt")
        enc = {k: v.to(self.device) for k, v in enc.items() if k in ("input_ids", "attention_mask")}
        if targets is not None:
            labels = self.tokenizer(text_target=targets, max_length=TARGET_MAX, truncation=True, padding=True,
                                    return_tensors="pt")["input_ids"]
            labels[labels == self.tokenizer.pad_token_id] = -100
            enc["labels"] = labels.to(self.device)
        return enc

    def finetune(self, pairs, cfg):
        rng = random.Random(cfg["seed"])
        opt = torch.optim.AdamW(self.model.parameters(), lr=cfg["learning_rate"], eps=cfg["adam_epsilon"])
        total = _train_schedule(cfg, len(pairs))
        step, losses = 0, []
        self.model.train()
        for _ in range(cfg["epochs"]):
            order = list(range(len(pairs)))
            rng.shuffle(order)
            loss_sum, n_batches, micro = 0.0, 0, 0
            for start in range(0, len(order), cfg["batch_size"]):
                chunk = [pairs[i] for i in order[start:start + cfg["batch_size"]]]
                out = self.model(**self._batch([c for c, _ in chunk], [s for _, s in chunk]))
                (out.loss / cfg["gradient_accumulation"]).backward()
                loss_sum += out.loss.item()
                n_batches += 1
                micro += 1
                if micro % cfg["gradient_accumulation"] == 0 or start + cfg["batch_size"] >= len(order):
                    torch.nn.utils.clip_grad_norm_(self.model.parameters(), cfg["max_grad_norm"])
                    for g in opt.param_groups:
                        g["lr"] = cfg["learning_rate"] * _linear(step, cfg["warmup_steps"], total)
                    opt.step()
                    opt.zero_grad()
                    step += 1
            losses.append(loss_sum / max(n_batches, 1))
        self.model.eval()
        return {"epoch_loss": losses, "skipped_sequences": 0, "optimizer_steps": step}

    @torch.no_grad()
    def summarize(self, text):
        enc = self._batch([text])
        enc.pop("labels", None)
        out = self.model.generate(**enc, max_new_tokens=TARGET_MAX, num_beams=1, do_sample=False)
        return self.tokenizer.decode(out[0], skip_special_tokens=True).strip()

    def clone(self):
        other = copy.copy(self)
        other.model = copy.deepcopy(self.model)
        return other

    def save(self, path):
        _write_marker(path, "seq2seq")
        self.model.save_pretrained(os.path.join(path, "hf"))
        self.tokenizer.save_pretrained(os.path.join(path, "hf"))


def register(name="pretrained"):
    _core.register_backend(name, new_causal=PretrainedCausalLM.create, new_seq2seq=PretrainedSeq2Seq.create,
                           load_causal=PretrainedCausalLM.load, load_seq2seq=PretrainedSeq2Seq.load)

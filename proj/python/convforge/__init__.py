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

"""Conversation generation for summarization data augmentation.

The heavy lifting lives in the compiled `_core` module; this package adds the
command-line entry point and the optional transformers backend.
"""

from ._core import (  # noqa: F401
    RuntimeFailure,
    ValidationError,
    backend_names,
    bleu4,
    bucket_length,
    clipped_surrogate,
    compute_gae,
    compute_stats,
    corpus_bleu4,
    decode_conversation,
    default_config,
    encode_cn,
    encode_sl,
    evaluate_summaries,
    linearize,
    load_dataset,
    make_synthetic_corpus,
    meteor,
    anonymize,
    parse_controls,
    porter_stem,
    register_backend,
    rouge_l_f1,
    rouge_n_f1,
    run_cli,
    sample_inference_controls,
    surface_tokens,
    whiten,
)

__version__ = "0.1.0"


def _wants_pretrained(args):
    if "pretrained" in args:
        return True
    for flag, value in zip(args, args[1:]):
        if flag == "--config":
            try:
                with open(value) as f:
                    return '"pretrained"' in f.read()
            except OSError:
                return False
    return False


def main(argv=None):
    """Run the command line; registers the pretrained backend when needed."""
    import sys

    args = list(sys.argv[1:] if argv is None else argv)
    if _wants_pretrained(args):
        from . import pretrained

        pretrained.register()
    code, out, err = run_cli(args)
    sys.stdout.write(out)
    sys.stderr.write(err)
    return code

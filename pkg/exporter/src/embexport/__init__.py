"""Export CLIP image and text embeddings as EMB1 archives."""

from .archive import ArchiveWriteError, Record, write_archive
from .export import ClipEncoder, PromptFileError, export_images, export_texts, parse_prompt_file
from .manifest import ExportManifest, ManifestError

__version__ = "0.1.0"

"""
Application configuration.
Defaults live in config.yaml; any key can be overridden by a KQL_ prefixed
environment variable, e.g. KQL_LOG=DEBUG.
Look at https://www.dynaconf.com for more information.
"""

from dynaconf import Dynaconf

config = Dynaconf(
    envvar_prefix="KQL",
    settings_files=["config.yaml"],
    core_loaders=["YAML"],
    environments=False,
    load_dotenv=True,
)

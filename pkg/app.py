import os
from dotenv import load_dotenv

# .env must be loaded before config.py reads BICLSTM_* variables
load_dotenv()

from application import create_app  # noqa: E402

# Get the configuration name from environment variable or use 'default'
config_name = os.getenv('BICLSTM_CONFIG', 'default')

# Create the command group using the Application Factory Pattern
cli = create_app(config_name)

if __name__ == '__main__':
    cli()

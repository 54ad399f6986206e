from gridfuse.cli import main

main()
